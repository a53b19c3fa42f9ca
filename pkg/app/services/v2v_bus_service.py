"""Simulated broadcast channel with a one-step delivery delay.

Messages published during step k are handed out at step k+1 and discarded
afterwards. Every envelope carries the step it was sent in, so consumers can
prove the delay.
"""

import logging
import threading
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class BusSynchronyError(RuntimeError):
    """Raised when a message is published or consumed at the wrong step."""


@dataclass(frozen=True)
class BusEnvelope:
    step_sent: int
    sender_id: int
    payload: bytes


class V2VBusService:
    """Lock-step broadcast bus with optional, seeded message loss."""

    def __init__(self, agent_ids: list[int], drop_prob: float = 0.0, seed: int = 0):
        if not 0.0 <= drop_prob <= 1.0:
            raise ValueError(f"drop_prob must be within [0, 1], got {drop_prob}")
        self.agent_ids = sorted(agent_ids)
        self.drop_prob = drop_prob
        self.current_step = -1
        self.dropped = 0
        self._dropped_lock = threading.Lock()
        self._outbox: dict[int, list[BusEnvelope]] = defaultdict(list)
        # one loss stream per link so the outcome never depends on call order
        self._link_rng = {
            (s, r): np.random.Generator(
                np.random.Philox(np.random.SeedSequence(seed, spawn_key=(s, r, 2)))
            )
            for s in self.agent_ids
            for r in self.agent_ids
            if s != r
        }

    def begin_step(self, step: int) -> None:
        if step != self.current_step + 1:
            raise BusSynchronyError(
                f"Bus expected step {self.current_step + 1}, got {step}"
            )
        self.current_step = step
        for old in [k for k in self._outbox if k < step - 1]:
            del self._outbox[old]

    def publish(self, step: int, sender_id: int, payload: bytes) -> None:
        if step != self.current_step:
            raise BusSynchronyError(
                f"Agent {sender_id} published for step {step} during step {self.current_step}"
            )
        self._outbox[step].append(BusEnvelope(step_sent=step, sender_id=sender_id, payload=payload))

    def deliver(self, step: int, receiver_id: int) -> list[BusEnvelope]:
        """Messages from the previous step addressed to everyone but the sender."""
        if step != self.current_step:
            raise BusSynchronyError(
                f"Agent {receiver_id} consumed at step {step} during step {self.current_step}"
            )

        envelopes = []
        for envelope in self._outbox.get(step - 1, []):
            if envelope.sender_id == receiver_id:
                continue
            if envelope.step_sent != step - 1:
                raise BusSynchronyError(
                    f"CCM from {envelope.sender_id} sent at step {envelope.step_sent} "
                    f"consumed at step {step}"
                )
            if self.drop_prob > 0.0:
                rng = self._link_rng[(envelope.sender_id, receiver_id)]
                if rng.random() < self.drop_prob:
                    with self._dropped_lock:
                        self.dropped += 1
                    logger.debug(
                        f"Dropped CCM {envelope.sender_id}->{receiver_id} at step {step}"
                    )
                    continue
            envelopes.append(envelope)
        return envelopes
