pub mod deduction;
pub mod renaming;
