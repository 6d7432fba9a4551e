//! Small reference graphs in the edge-list format.

/// Chain-and-fork graph: three paths from `A` into the prediction, `X3` uninvolved.
pub const G1: &str = "\
node A kind=sensitive
node X1 kind=feature
node X2 kind=feature
node X3 kind=feature
node Y kind=outcome
node Yhat kind=prediction
A -> X1
A -> X2
X1 -> X2
X3 -> Y
";

/// Undirected edge at the sensitive attribute.
pub const G2: &str = "\
node A kind=sensitive
node X1 kind=feature
node X2 kind=feature
node Yhat kind=prediction
A -- X1
X1 -> X2
";

/// Undirected edge between two children of `A`; not completely ordered.
pub const G3: &str = "\
node A kind=sensitive
node X1 kind=feature
node X2 kind=feature
node Yhat kind=prediction
A -> X1
A -> X2
X1 -- X2
";

/// Two causes of the outcome, only one of them downstream of `A`.
pub const SPOUSE: &str = "\
node A kind=sensitive
node X1 kind=feature
node X2 kind=feature
node Y kind=outcome
node Yhat kind=prediction
A -> X1
X1 -> Y
X2 -> Y
";
