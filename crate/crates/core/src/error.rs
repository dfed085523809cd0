use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("edge size k must be at least 3, got {0}")]
    EdgeSizeTooSmall(usize),
    #[error("n and d must be positive (n = {n}, d = {d})")]
    NonPositive { n: usize, d: usize },
    #[error("need n >= k (n = {n}, k = {k})")]
    TooFewVertices { n: usize, k: usize },
    #[error("k = {k} does not divide n*d = {nd}")]
    Divisibility { nd: usize, k: usize },
    #[error("sequence has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("label {label} is outside 1..={n}")]
    LabelOutOfRange { label: u32, n: usize },
    #[error("label {label} occurs {count} times, expected {d}")]
    LabelCount { label: u32, count: usize, d: usize },
    #[error("permutation is not in any class E_l with l >= 1")]
    NoLoops,
    #[error("permutation is not in E (multiple edge, bad loop or too many loops)")]
    NotInE,
    #[error("level {level} + 1 exceeds the loop cap {cap}")]
    AboveLoopCap { level: usize, cap: usize },
    #[error("switching is not valid for this permutation")]
    InvalidSwitching,
    #[error("loop index l must be at least 1")]
    ZeroLevel,
    #[error("delta1 = {0} is not below 1; exact generation is impossible with this source")]
    Delta1TooLarge(String),
    #[error("B(z) = {found} is below (1 - delta1) * B = {floor}; delta1 source is invalid")]
    Delta1Violated { found: String, floor: String },
    #[error("attempt budget of {0} restarts exhausted")]
    BudgetExhausted(u64),
    #[error("cost guard: {what} = {size} exceeds limit {limit}")]
    CostGuard { what: &'static str, size: String, limit: u64 },
    #[error("sample is not a member of the class list")]
    UnknownClass,
    #[error("no classes supplied")]
    EmptyClasses,
}

impl Error {
    /// Budget and cost-guard exhaustion are resource failures; everything else is a domain error.
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, Error::BudgetExhausted(_) | Error::CostGuard { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
