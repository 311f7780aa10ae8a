//! Holds the `acceptance` test target only. Run it with
//! `cargo test -p glassecho-validation --test acceptance`.
