//! Acceptance checks live in `tests/`.
