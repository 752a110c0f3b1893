use std::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;

macro_rules! numeric_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = std::num::ParseIntError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix).unwrap_or(s).parse().map($name)
            }
        }
    };
}

numeric_id!(SkillId, "s");
numeric_id!(RequestId, "r");

/// Dataset identifier of a problem, e.g. `amc12a_2021_p7`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProblemId(pub String);

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProblemId {
    fn from(s: &str) -> Self {
        ProblemId(s.to_string())
    }
}

/// The four directional transformations applied by the evolver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ExtendDimensions,
    IdentifyKeyConcepts,
    Parameterize,
    ScaleComplexity,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::ExtendDimensions,
        Direction::IdentifyKeyConcepts,
        Direction::Parameterize,
        Direction::ScaleComplexity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::ExtendDimensions => "extend_dimensions",
            Direction::IdentifyKeyConcepts => "identify_key_concepts",
            Direction::Parameterize => "parameterize",
            Direction::ScaleComplexity => "scale_complexity",
        }
    }

    /// The instruction substituted into the directional prompt.
    pub fn core_description(self) -> &'static str {
        match self {
            Direction::IdentifyKeyConcepts => {
                "Determine the essential ideas, methods, or theorems that are crucial to solving the initial problem."
            }
            Direction::Parameterize => {
                "If the problem involves specific numbers, generalize it by replacing these with variables."
            }
            Direction::ScaleComplexity => {
                "Try both simpler and more complicated versions of the problem to see how the approach adapts."
            }
            Direction::ExtendDimensions => {
                "If the problem is defined in a specific number of dimensions, consider if it holds in more or fewer dimensions."
            }
        }
    }

    pub fn template_id(self) -> String {
        format!("dir_{}", self.as_str())
    }

    pub fn index(self) -> usize {
        Direction::ALL.iter().position(|d| *d == self).expect("listed")
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a skill came from. Prover and request-solver skills are genealogy
/// roots; directional skills always have a parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Prover,
    RequestSolver,
    DirExtendDimensions,
    DirIdentifyKeyConcepts,
    DirParameterize,
    DirScaleComplexity,
}

impl Origin {
    pub const ALL: [Origin; 6] = [
        Origin::Prover,
        Origin::RequestSolver,
        Origin::DirExtendDimensions,
        Origin::DirIdentifyKeyConcepts,
        Origin::DirParameterize,
        Origin::DirScaleComplexity,
    ];

    pub fn direction(self) -> Option<Direction> {
        match self {
            Origin::Prover | Origin::RequestSolver => None,
            Origin::DirExtendDimensions => Some(Direction::ExtendDimensions),
            Origin::DirIdentifyKeyConcepts => Some(Direction::IdentifyKeyConcepts),
            Origin::DirParameterize => Some(Direction::Parameterize),
            Origin::DirScaleComplexity => Some(Direction::ScaleComplexity),
        }
    }

    pub fn is_root(self) -> bool {
        self.direction().is_none()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Prover => "prover",
            Origin::RequestSolver => "request_solver",
            Origin::DirExtendDimensions => "dir_extend_dimensions",
            Origin::DirIdentifyKeyConcepts => "dir_identify_key_concepts",
            Origin::DirParameterize => "dir_parameterize",
            Origin::DirScaleComplexity => "dir_scale_complexity",
        }
    }
}

impl From<Direction> for Origin {
    fn from(d: Direction) -> Self {
        match d {
            Direction::ExtendDimensions => Origin::DirExtendDimensions,
            Direction::IdentifyKeyConcepts => Origin::DirIdentifyKeyConcepts,
            Direction::Parameterize => Origin::DirParameterize,
            Direction::ScaleComplexity => Origin::DirScaleComplexity,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A verified lemma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillRecord {
    pub id: SkillId,
    pub statement: String,
    pub code: String,
    pub embedding: Embedding,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<SkillId>,
    pub evolve_count: u64,
    pub created_round: u64,
}

/// A skill before the library assigns it an id.
#[derive(Debug, Clone, PartialEq)]
pub struct NewSkill {
    pub statement: String,
    pub code: String,
    pub embedding: Embedding,
    pub origin: Origin,
    pub parent_id: Option<SkillId>,
    pub created_round: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Open,
    Solved,
}

/// A proposed sub-goal lemma statement awaiting a proof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: RequestId,
    pub thought: String,
    pub statement: String,
    pub embedding: Embedding,
    pub solve_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_problem: Option<ProblemId>,
    pub status: RequestStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewRequest {
    pub thought: String,
    pub statement: String,
    pub embedding: Embedding,
    pub source_problem: Option<ProblemId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemStatus {
    Pending,
    Solved,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub id: ProblemId,
    pub informal_statement: String,
    pub informal_proofs: Vec<String>,
    pub formal_statement: String,
    pub embedding: Embedding,
    pub status: ProblemStatus,
    pub attempts_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    Lemma,
    Request,
    Problem,
}

impl std::str::FromStr for StoreKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lemma" | "lemmas" | "skill" | "skills" => Ok(StoreKind::Lemma),
            "request" | "requests" => Ok(StoreKind::Request),
            "problem" | "problems" => Ok(StoreKind::Problem),
            other => Err(format!("unknown store `{other}` (expected lemma, request or problem)")),
        }
    }
}

/// One k-NN hit. Ranks start at 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryHit<Id> {
    pub id: Id,
    pub similarity: f64,
    pub rank: usize,
}
