//! WIT-phase subproblems (placeholder).
