//! Book chapters as doc-tests (filled in last).
