pub mod dynamics;
pub mod expansion;
pub mod exponents;
pub mod linalg;
pub mod pipeline;
pub mod problem;
pub mod rational;
pub mod report;
pub mod spectral;
pub mod tensors;
pub mod termlang;
pub mod vecpoly;

