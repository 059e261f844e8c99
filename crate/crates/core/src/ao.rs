//! Alternating optimization (placeholder).
