pub mod capture;
pub mod clock;
pub mod config;
mod error;
pub mod hospital;
pub mod model;
pub mod pipeline;
mod platform;
pub mod processing;
pub mod quality;
pub mod store;
pub mod strain;

pub use error::{CdpError, ErrorClass};
pub use platform::{CaseView, Platform, ResearchCase, SearchPage, SimilarStrains, DEFAULT_LIMIT, MAX_LIMIT};
