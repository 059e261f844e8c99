//! WET-phase subproblems (placeholder).
