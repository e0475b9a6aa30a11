"""Cross-stage pipeline failure wrapper."""

from __future__ import annotations

from typing import Optional


class PipelineError(RuntimeError):
    """An unrecoverable step failure, located by dialogue and turn."""

    def __init__(
        self,
        message: str,
        dialogue_id: str,
        turn_index: Optional[int] = None,
        cause: Optional[BaseException] = None,
    ) -> None:
        where = f"dialogue {dialogue_id!r}"
        if turn_index is not None:
            where += f", turn {turn_index}"
        super().__init__(f"{where}: {message}")
        self.dialogue_id = dialogue_id
        self.turn_index = turn_index
        self.__cause__ = cause
