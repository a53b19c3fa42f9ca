import logging
from collections import defaultdict, deque

from app.schemas.ccm import RvPoseRecord

logger = logging.getLogger(__name__)


class RvBufferService:
    """Keeps the recent pose records received from remote vehicles."""

    def __init__(self, retention: float):
        self.retention = retention
        self._records: dict[int, deque[RvPoseRecord]] = defaultdict(deque)

    def store(self, record: RvPoseRecord) -> None:
        buffer = self._records[record.sender_id]
        if buffer and record.timestamp < buffer[-1].timestamp:
            logger.warning(
                f"Dropping out-of-order pose record from {record.sender_id} "
                f"({record.timestamp:.3f} < {buffer[-1].timestamp:.3f})"
            )
            return
        buffer.append(record)
        while buffer and buffer[0].timestamp < record.timestamp - self.retention:
            buffer.popleft()

    def senders(self) -> list[int]:
        return sorted(self._records)

    def nearest(self, sender_id: int, t: float) -> RvPoseRecord | None:
        """Record closest in time to ``t``; the earliest one wins ties."""
        buffer = self._records.get(sender_id)
        if not buffer:
            return None
        return min(buffer, key=lambda r: abs(r.timestamp - t))

    def records(self, sender_id: int) -> list[RvPoseRecord]:
        """All retained records of a sender, oldest first."""
        return list(self._records.get(sender_id, ()))
