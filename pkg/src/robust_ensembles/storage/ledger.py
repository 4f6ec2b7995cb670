"""SQLite audit log of CLI runs."""

from __future__ import annotations

import json
import logging
import sqlite3
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

# Status state machine: running → completed | failed
VALID_STATUSES = {"running", "completed", "failed"}


class RunLedger:
    """Records each command run with its configuration and outcome.

    Tables:
    - runs: one row per invocation with status, exit code, artifacts, timestamps
    """

    def __init__(self, db_path: Path) -> None:
        self._db_path = db_path
        self._conn: sqlite3.Connection | None = None

    def connect(self) -> None:
        """Open database connection and ensure schema exists."""
        self._db_path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(str(self._db_path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._create_tables()

    def close(self) -> None:
        """Close the database connection."""
        if self._conn:
            self._conn.close()
            self._conn = None

    def __enter__(self) -> RunLedger:
        self.connect()
        return self

    def __exit__(self, *args: object) -> None:
        self.close()

    @property
    def conn(self) -> sqlite3.Connection:
        if self._conn is None:
            raise RuntimeError("Database not connected. Call connect() first.")
        return self._conn

    def _create_tables(self) -> None:
        self.conn.executescript("""
            CREATE TABLE IF NOT EXISTS runs (
                run_id INTEGER PRIMARY KEY AUTOINCREMENT,
                command TEXT NOT NULL,
                config TEXT NOT NULL,
                status TEXT NOT NULL DEFAULT 'running',
                exit_code INTEGER,
                artifacts TEXT DEFAULT '[]',
                points_completed INTEGER DEFAULT 0,
                points_failed INTEGER DEFAULT 0,
                error_message TEXT DEFAULT '',
                started_at TEXT NOT NULL,
                completed_at TEXT
            );

            CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status);
        """)

    def start_run(self, command: str, config: dict[str, Any]) -> int:
        """Insert a running row and return its id."""
        now = datetime.now(UTC).isoformat()
        cursor = self.conn.execute(
            "INSERT INTO runs (command, config, started_at) VALUES (?, ?, ?)",
            (command, json.dumps(config, sort_keys=True, default=str), now),
        )
        self.conn.commit()
        return cursor.lastrowid or 0

    def complete_run(
        self,
        run_id: int,
        artifacts: list[str] | None = None,
        points_completed: int = 0,
        points_failed: int = 0,
    ) -> None:
        """Mark a run as completed with exit code 0."""
        self._finish(run_id, "completed", 0, artifacts or [], points_completed, points_failed, "")

    def fail_run(self, run_id: int, exit_code: int, error_message: str) -> None:
        """Mark a run as failed with its exit code."""
        self._finish(run_id, "failed", exit_code, [], 0, 0, error_message)

    def _finish(
        self,
        run_id: int,
        status: str,
        exit_code: int,
        artifacts: list[str],
        points_completed: int,
        points_failed: int,
        error_message: str,
    ) -> None:
        if status not in VALID_STATUSES:
            raise ValueError(f"Invalid status: {status}")
        now = datetime.now(UTC).isoformat()
        self.conn.execute(
            """UPDATE runs SET
               status = ?, exit_code = ?, artifacts = ?, points_completed = ?,
               points_failed = ?, error_message = ?, completed_at = ?
               WHERE run_id = ?""",
            (
                status,
                exit_code,
                json.dumps(artifacts),
                points_completed,
                points_failed,
                error_message,
                now,
                run_id,
            ),
        )
        self.conn.commit()

    def get_run(self, run_id: int) -> dict[str, Any] | None:
        row = self.conn.execute("SELECT * FROM runs WHERE run_id = ?", (run_id,)).fetchone()
        return dict(row) if row else None

    def list_runs(self, limit: int = 20) -> list[dict[str, Any]]:
        """Most recent runs first."""
        rows = self.conn.execute(
            "SELECT * FROM runs ORDER BY run_id DESC LIMIT ?", (limit,)
        ).fetchall()
        return [dict(r) for r in rows]

    def count_by_status(self) -> dict[str, int]:
        rows = self.conn.execute(
            "SELECT status, COUNT(*) as cnt FROM runs GROUP BY status"
        ).fetchall()
        return {row["status"]: row["cnt"] for row in rows}
