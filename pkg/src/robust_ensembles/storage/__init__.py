"""Storage layer: result tables, SVG figures, SQLite run ledger."""
