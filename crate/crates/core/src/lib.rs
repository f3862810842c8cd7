pub mod autodiff;
pub mod eval;
pub mod math;
pub mod policy;
pub mod reference;
pub mod sim;
pub mod train;
