"""ECDH challenge-response authentication, the end-to-end demo target.

Alice holds Bob's (pre-trusted) public key Pub_B = [k_B]G.  She draws a
random r, sends R = [r]G, and expects Q_B = [k_B]R back, which must
equal her own Q = [r]Pub_B.  Only the holder of k_B can answer -- or an
attacker who recovered k_B from the side channel of Bob's response
computation, which is exactly what this package demonstrates: the
responder here emits a leakage trace of its kP execution.

Certificate handling is out of scope; identities are pre-trusted
fixtures persisted as key=value text files (only on explicit request,
since they hold the demo's secrets).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .curve import (
    AffinePoint,
    CurveParams,
    CurveError,
    NOMINAL_SCALAR_BITS,
    Scalar,
    get_curve,
    is_on_curve,
    kp_multiply,
    kp_point,
)
from .leaksim import LeakModel, build_schedule, synthesize_trace
from .traces import Trace


@dataclass(frozen=True)
class Identity:
    """A responder: private scalar, matching public key, curve domain."""

    curve_id: str
    params: CurveParams
    k: Scalar
    pub: AffinePoint

    @classmethod
    def generate(cls, curve_id: str, rng, nbits: Optional[int] = None) -> "Identity":
        params = get_curve(curve_id)
        if nbits is None:
            nbits = NOMINAL_SCALAR_BITS[curve_id]
        k = Scalar.random(rng, nbits)
        return cls(curve_id, params, k, kp_point(k, params.g, params))


@dataclass(frozen=True)
class Challenge:
    """Verifier-side state: r stays secret, R goes on the wire."""

    r: Scalar
    R: AffinePoint
    q_expected: AffinePoint


def challenge(
    pub_b: AffinePoint, params: CurveParams, rng, nbits: int
) -> Challenge:
    """Draw r, compute R = [r]G and the expected response [r]Pub_B."""
    if not is_on_curve(pub_b, params) or pub_b.infinity:
        raise CurveError("public key is not a valid curve point")
    r = Scalar.random(rng, nbits)
    return Challenge(r, kp_point(r, params.g, params), kp_point(r, pub_b, params))


def respond(
    identity: Identity,
    R: AffinePoint,
    model: LeakModel,
    clock_hz: float = 100e6,
) -> tuple[AffinePoint, Trace]:
    """Compute Q_B = [k_B]R and the leakage trace of that exact execution.

    Off-curve challenge points are rejected (invalid-curve hygiene).
    """
    if R.infinity or not is_on_curve(R, identity.params):
        raise CurveError("challenge point rejected: not on the curve")
    q_b, transcript = kp_multiply(identity.k, R, identity.params)
    trace = synthesize_trace(build_schedule(transcript), model, clock_hz)
    return q_b, trace


def verify(q_expected: AffinePoint, q_b: AffinePoint) -> bool:
    """Authentication passes iff the points match exactly."""
    return q_expected == q_b


def save_identity(identity: Identity, path, allow_secret_write: bool = False) -> None:
    """Persist an identity.  Refuses unless explicitly allowed: it is a secret."""
    if not allow_secret_write:
        raise PermissionError(
            "identity files contain the private scalar; pass allow_secret_write=True"
        )
    lines = [
        f"curve={identity.curve_id}",
        f"k={identity.k.to_hex()}",
        f"pub={identity.pub.to_hex()}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_identity(path) -> Identity:
    fields = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        curve_id = fields["curve"]
        params = get_curve(curve_id)
        k = Scalar.from_hex(fields["k"])
        pub = AffinePoint.from_hex(params.field, fields["pub"])
    except KeyError as exc:
        raise ValueError(f"{path}: missing identity field {exc}") from None
    identity = Identity(curve_id, params, k, pub)
    if kp_point(k, params.g, params) != pub:
        raise ValueError(f"{path}: stored public key does not match the scalar")
    return identity
