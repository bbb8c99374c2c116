pub mod boundary;
pub mod certify;
pub mod experiment;
pub mod model;
pub mod pnrd;
