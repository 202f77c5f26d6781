pub mod acpf;
pub mod case_io;
pub mod cases;
pub mod dcopf;
pub mod network;
pub mod solution;
pub mod study;
pub mod topo_model;
