pub mod conv;
pub mod elementwise;
pub mod linalg;
pub mod norm;
