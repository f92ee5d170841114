pub mod aggregation;
pub mod backends;
pub mod corpus;
pub mod evaluation;
pub mod features;
pub mod preprocess;
pub mod prompting;
pub mod pipeline;
