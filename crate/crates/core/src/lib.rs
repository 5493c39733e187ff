pub mod sim;
pub mod descriptor;
pub mod gateway;
pub mod memory;
pub mod reasoning;
pub mod reflection;
pub mod harness;
pub mod cli;
