"""User-side verification flow: scan, challenge, verify, decide.

The verifier trusts only the store (reached in-process or over the line
protocol) and its own freshly issued challenge nonces. Responses are checked
in order: signature, challenge freshness, state lookup, state currency. The
interaction gate opens only for a current, verified state, and a failed gate
can never be overridden by the user.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from . import crypto, transport
from .errors import NoSuchSession, NotFound
from .store import DeviceView

RESPONSE_LEN = crypto.DIGEST_LEN + 2 * crypto.NONCE_LEN + crypto.SIGNATURE_LEN
_SIGNED_LEN = crypto.DIGEST_LEN + 2 * crypto.NONCE_LEN


class StateCheck(enum.Enum):
    VERIFIED_CURRENT = "verified_current"
    VERIFIED_STALE = "verified_stale"
    UNKNOWN_STATE = "unknown_state"
    BAD_SIGNATURE = "bad_signature"
    REPLAY_DETECTED = "replay_detected"
    UNKNOWN_DEVICE = "unknown_device"


@dataclass(frozen=True)
class ChallengeSession:
    uuid: bytes
    challenge: bytes
    issued_at: int


@dataclass(frozen=True)
class TrustVerdict:
    uuid: bytes
    identity: DeviceView | None
    state_check: StateCheck
    gate: bool
    reason: str

    def render(self) -> str:
        return (
            f"VERDICT uuid={self.uuid.hex()} state={self.state_check.value} "
            f"gate={1 if self.gate else 0} reason={self.reason}"
        )


def parse_verdict_line(line: str) -> TrustVerdict:
    """Inverse of TrustVerdict.render (identity is not carried)."""
    parts = line.strip().split(" ", 4)
    if len(parts) != 5 or parts[0] != "VERDICT":
        raise ValueError("not a VERDICT line")
    fields = dict(p.split("=", 1) for p in parts[1:])
    return TrustVerdict(
        uuid=bytes.fromhex(fields["uuid"]),
        identity=None,
        state_check=StateCheck(fields["state"]),
        gate=fields["gate"] == "1",
        reason=fields["reason"],
    )


def scan(frame_bytes: bytes) -> bytes:
    """UUID from an advertising frame; raises ParseError when malformed."""
    return transport.parse_advertisement(frame_bytes)


class Verifier:
    """One verification session registry; read-only toward the store."""

    def __init__(self, rng=None):
        self._rng = rng
        self._sessions: dict[bytes, ChallengeSession] = {}
        self._counter = 0

    def outstanding(self, uuid: bytes) -> ChallengeSession | None:
        return self._sessions.get(bytes(uuid))

    def issue_challenge(self, uuid: bytes) -> tuple[ChallengeSession, list[bytes]]:
        """Fresh nonce for a device, framed for the data channel.

        Reissuing replaces any outstanding challenge for the same UUID, so
        at most one is live per device.
        """
        self._counter += 1
        session = ChallengeSession(bytes(uuid), crypto.new_nonce(self._rng), self._counter)
        self._sessions[session.uuid] = session
        frames = transport.fragment(transport.MSG_CHALLENGE, session.challenge)
        return session, [transport.encode_data_frame(f) for f in frames]

    def verify_response(
        self, session: ChallengeSession, response: bytes, device_view: DeviceView | None, store
    ) -> TrustVerdict:
        """Judge a reassembled response payload.

        The challenge is consumed whatever the outcome; a second submission
        against the same session raises NoSuchSession.
        """
        live = self._sessions.get(session.uuid)
        if live is None or live.issued_at != session.issued_at:
            raise NoSuchSession("no outstanding challenge for this device")
        del self._sessions[session.uuid]

        def verdict(check: StateCheck, reason: str, gate: bool = False) -> TrustVerdict:
            return TrustVerdict(session.uuid, device_view, check, gate, reason)

        if device_view is None:
            return verdict(StateCheck.UNKNOWN_DEVICE, "device is not registered")

        response = bytes(response)
        if len(response) != RESPONSE_LEN:
            return verdict(
                StateCheck.BAD_SIGNATURE, f"response is {len(response)} bytes, expected {RESPONSE_LEN}"
            )
        signed, signature = response[:_SIGNED_LEN], response[_SIGNED_LEN:]
        if not crypto.verify(device_view.public_key, signed, signature):
            return verdict(StateCheck.BAD_SIGNATURE, "signature does not verify under the device key")

        echoed = response[crypto.DIGEST_LEN : crypto.DIGEST_LEN + crypto.NONCE_LEN]
        if echoed != session.challenge:
            return verdict(StateCheck.REPLAY_DETECTED, "echoed challenge does not match this session")

        reported = response[: crypto.DIGEST_LEN]
        try:
            state_view = store.lookup_state(session.uuid, reported)
        except NotFound:
            return verdict(StateCheck.UNKNOWN_STATE, "reported state is not registered")

        if not state_view.current:
            return verdict(
                StateCheck.VERIFIED_STALE,
                f"state is registered but superseded (firmware {state_view.fw_meta!r})",
            )
        return verdict(StateCheck.VERIFIED_CURRENT, "ok", gate=True)


def trust_decision(verdict: TrustVerdict, auto_accept: bool, prompt=None) -> bool:
    """Final accept/reject. A closed gate is never overridable by the user."""
    if auto_accept:
        return verdict.gate
    ask = prompt if prompt is not None else input
    answer = ask(f"{verdict.render()}\naccept interaction? [y/N] ").strip().lower()
    return verdict.gate and answer in ("y", "yes")
