//! Home of the `acceptance` test target: `cargo test -p uvlc-validation`.
