//! Error categories printed on failure, one word each so scripts can match
//! on them.

use forge_core::corpus::CorpusError;
use forge_core::curriculum::CurriculumError;
use forge_core::evaluate::EvalError;
use forge_core::genclient::GenError;
use forge_core::instruct::InstructError;
use forge_core::select::SelectError;
use forge_core::transliterate::RuleTableError;

/// Bad flag combinations found after parsing; exits like a clap error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn corpus(e: &CorpusError) -> &'static str {
    match e {
        CorpusError::Io { .. } => "IoError",
        CorpusError::EmptyFile => "EmptyFile",
        CorpusError::Encoding { .. } => "EncodingError",
        CorpusError::MalformedRecord { .. } => "MalformedRecord",
        CorpusError::InvalidFractions(_) => "InvalidFractions",
        CorpusError::SizeMismatch { .. } => "SizeMismatch",
        CorpusError::InvalidGrammarExample(_) => "InvalidGrammarExample",
        CorpusError::UnknownName { .. } => "UnknownName",
    }
}

fn instruct(e: &InstructError) -> &'static str {
    match e {
        InstructError::DegeneratePair { .. } => "DegeneratePair",
        InstructError::DelimiterInContent { .. } => "DelimiterInContent",
        InstructError::MissingHint { .. } => "MissingHint",
        InstructError::InvariantViolation(_) => "InvariantViolation",
        InstructError::Parse { .. } => "ParseError",
        InstructError::UnknownTemplate(_) => "UnknownTemplate",
        InstructError::InvalidTemplate(_) => "InvalidTemplate",
    }
}

fn gen(e: &GenError) -> &'static str {
    match e {
        GenError::EndpointUnreachable(_) => "EndpointUnreachable",
        GenError::RateLimited { .. } => "RateLimited",
        GenError::Server { .. } => "ServerError",
        GenError::BadRequest { .. } => "BadRequest",
        GenError::Decode(_) => "DecodeError",
        GenError::EmptyCompletion => "EmptyCompletion",
        GenError::DimMismatch { .. } => "DimMismatch",
        GenError::NonFiniteEmbedding => "NonFiniteEmbedding",
        GenError::MissingVector(_) => "MissingVector",
        GenError::ScoreOutOfRange { .. } => "ScoreOutOfRange",
        GenError::CountMismatch { .. } => "CountMismatch",
        GenError::AllSamplesDegenerate(_) => "AllSamplesDegenerate",
        GenError::NoParsableExamples { .. } => "NoParsableExamples",
        GenError::InvalidConfig(_) => "InvalidConfig",
        GenError::ConfigMissing(_) => "ConfigMissing",
        GenError::Io(_) => "IoError",
    }
}

fn select(e: &SelectError) -> &'static str {
    match e {
        SelectError::EmptyPool => "EmptyPool",
        SelectError::MissingVectors => "MissingVectors",
        SelectError::DimMismatch { .. } | SelectError::VectorCount { .. } => "DimMismatch",
        SelectError::InvalidStrategy(_) => "InvalidStrategy",
        SelectError::InvalidMatrix(_) | SelectError::Decode(_) => "InvalidMatrix",
        SelectError::NoInputs => "NoInputs",
        SelectError::Encoding { .. } => "EncodingError",
        SelectError::Io { .. } => "IoError",
        SelectError::Corpus(c) => corpus(c),
    }
}

fn curriculum(e: &CurriculumError) -> &'static str {
    match e {
        CurriculumError::EmptyCorpus(_) | CurriculumError::TooSmall { .. } => "EmptyCorpus",
        CurriculumError::MissingRejected(_) => "MissingRejected",
        CurriculumError::InvalidHyperparams(_) => "InvalidHyperparams",
        CurriculumError::CountMismatch { .. } => "CountMismatch",
        CurriculumError::UnknownName { .. } => "UnknownName",
        CurriculumError::Instruct(i) => instruct(i),
        CurriculumError::Corpus(c) => corpus(c),
        CurriculumError::Io { .. } => "IoError",
    }
}

fn eval(e: &EvalError) -> &'static str {
    match e {
        EvalError::TooManyFailures { .. } => "TooManyFailures",
        EvalError::EmptyTestSet(_) => "EmptyTestSet",
        EvalError::InconsistentGrid(_) => "InconsistentGrid",
        EvalError::InvalidSetup(_) => "InvalidSetup",
        EvalError::Gen(g) => gen(g),
        EvalError::Select(s) => select(s),
        EvalError::Instruct(i) => instruct(i),
        EvalError::Io { .. } => "IoError",
    }
}

/// Category and exit code for a failed command.
pub fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return ("UsageError", 2);
        }
        let category = if let Some(e) = cause.downcast_ref::<CorpusError>() {
            corpus(e)
        } else if let Some(e) = cause.downcast_ref::<InstructError>() {
            instruct(e)
        } else if let Some(e) = cause.downcast_ref::<GenError>() {
            gen(e)
        } else if let Some(e) = cause.downcast_ref::<SelectError>() {
            select(e)
        } else if let Some(e) = cause.downcast_ref::<CurriculumError>() {
            curriculum(e)
        } else if let Some(e) = cause.downcast_ref::<EvalError>() {
            eval(e)
        } else if cause.downcast_ref::<RuleTableError>().is_some() {
            "InvalidRuleTable"
        } else if cause.downcast_ref::<std::io::Error>().is_some() {
            "IoError"
        } else if cause.downcast_ref::<serde_json::Error>().is_some() {
            "DecodeError"
        } else {
            continue;
        };
        return (category, 1);
    }
    ("Error", 1)
}
