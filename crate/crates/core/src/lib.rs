pub mod color;
pub mod app;
pub mod devices;
pub mod fixtures;
pub mod imaging;
pub mod metrics;
pub mod optimizer;
pub mod protocol;
pub mod scene;
pub mod store;
pub mod vision;
pub mod workflow;
