pub mod laws;
pub mod oracle;
