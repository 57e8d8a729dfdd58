//! Acceptance criteria for `stealthlab`, run as `cargo test -p stealthlab-validation --test acceptance`.
