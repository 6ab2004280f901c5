pub mod oracle;
pub mod report;
pub mod sweep;
pub mod train;
pub mod verify;
