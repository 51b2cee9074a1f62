pub mod checks;
pub mod gen;
pub mod oracle;
pub mod worked;

pub use oracle::Oracle;
