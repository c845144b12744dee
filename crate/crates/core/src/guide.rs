//! Binds the book chapters as doc-tests so their code samples compile and
//! run with `cargo test`.

// Chapters are attached below once the book sources exist.
