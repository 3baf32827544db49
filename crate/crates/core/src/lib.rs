pub mod cli;
pub mod hfg;
pub mod hfnmcf;
pub mod io;
pub mod net;
pub mod provenance;
pub mod qp;
pub mod sparse;
pub mod wlse;
