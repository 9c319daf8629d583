"""Simulated constrained IoT device.

A device stores only what it operationally needs: its UUID and keypair, the
digest of its own certificate, a copy of the trusted root, digests of
documents it has itself verified, and the full installation/configuration
documents required to recompute its state digest. Everything else lives in
the central store.

Device state persists to `.tltdev` files (binary, documented in
save_device); the secret key is written separately as a `.tltkey` file and
never appears in the state file.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

from . import crypto, documents, transport
from .crypto import PublicKey, SecretKey
from .documents import Document
from .errors import (
    ChainInvalid,
    ImageMismatch,
    InvalidKey,
    MalformedDocument,
    NotOperational,
    StaleSequence,
)

DEVICE_FILE_EXT = ".tltdev"
_DEV_MAGIC = b"TLTD"
_DEV_VERSION = 0x01

RESPONSE_LEN = crypto.DIGEST_LEN + crypto.NONCE_LEN + crypto.NONCE_LEN + crypto.SIGNATURE_LEN


class BootStatus(enum.Enum):
    UNPROGRAMMED = 0
    OPERATIONAL = 1
    INTEGRITY_FAILED = 2


@dataclass
class DeviceState:
    """One simulated device; mutate from a single thread at a time."""

    uuid: bytes
    public_key: PublicKey
    secret_key: SecretKey = field(repr=False)
    cert_digest: bytes
    trusted_root: Document
    verified_digests: set[bytes] = field(default_factory=set)
    fw_slot: tuple[Document, bytes] | None = None  # (installation doc, firmware doc digest)
    cfg: Document | None = None
    boot_status: BootStatus = BootStatus.UNPROGRAMMED
    rng: object = field(default=None, repr=False, compare=False)

    # -- helpers ----------------------------------------------------------

    def _full_chain(self, doc: Document, chain) -> list[Document]:
        """Append the trusted root when the caller's chain stops short of it."""
        full = [doc, *chain]
        if full[-1].doc_type != documents.DOC_ROOT:
            full.append(self.trusted_root)
        return full

    def _require_operational(self):
        if self.boot_status != BootStatus.OPERATIONAL:
            raise NotOperational(f"device is {self.boot_status.name.lower()}")

    # -- operations -------------------------------------------------------

    def remember_digest(self, doc: Document, chain) -> None:
        """Store a document's digest after verifying it against the root.

        Raises ChainInvalid (and stores nothing) when verification fails.
        """
        result = documents.verify_chain(self._full_chain(doc, chain), self.trusted_root)
        if not result:
            raise ChainInvalid(result.reason)
        self.verified_digests.add(documents.doc_digest(doc))

    def install_firmware(
        self, fw_doc: Document, fw_image: bytes, chain, instinfo: str
    ) -> Document:
        """Verify, install, and sign a confirmation of installation.

        The firmware document must chain to the trusted root and the image
        must match its signed digest; otherwise the firmware slot is left
        untouched.
        """
        result = documents.verify_chain(self._full_chain(fw_doc, chain), self.trusted_root)
        if not result:
            raise ChainInvalid(result.reason)
        if fw_doc.doc_type != documents.DOC_FIRMWARE:
            raise ChainInvalid("document is not a firmware document")
        if crypto.digest(fw_image) != fw_doc.field(documents.FW_IMAGE_DIGEST):
            raise ImageMismatch("firmware image does not match its signed digest")
        fw_digest = documents.doc_digest(fw_doc)
        inst = documents.make_installation_document(fw_doc, self.uuid, instinfo, self.secret_key)
        self.verified_digests.add(fw_digest)
        self.fw_slot = (inst, fw_digest)
        self.boot_status = BootStatus.OPERATIONAL
        return inst

    def apply_configuration(self, cfg_payload: bytes, seq: int) -> Document:
        """Accept a configuration and sign it into the device state."""
        self._require_operational()
        if seq <= self.config_seq():
            raise StaleSequence(f"sequence {seq} is not above {self.config_seq()}")
        cfg = documents.make_configuration_document(cfg_payload, self.uuid, seq, self.secret_key)
        self.cfg = cfg
        return cfg

    def config_seq(self) -> int:
        """Sequence of the current configuration (0 before any is applied)."""
        return documents.config_seq(self.cfg) if self.cfg is not None else 0

    def compute_state_digest(self) -> bytes:
        """Digest over the installation and configuration documents."""
        self._require_operational()
        inst, _ = self.fw_slot
        return documents.state_digest(inst, self.cfg, self.uuid)

    def advertise(self) -> bytes:
        """Broadcast frame carrying this device's UUID."""
        flags = transport.FLAG_OPERATIONAL if self.boot_status == BootStatus.OPERATIONAL else 0
        return transport.encode_advertisement(self.uuid, flags)

    def handle_challenge(self, challenge: bytes) -> bytes:
        """Signed attestation of current state.

        Response layout: state_digest(32) || challenge(16) || nonce(16) ||
        signature(64), where the signature covers the first 64 bytes. A
        fresh nonce is drawn per call and then discarded.
        """
        self._require_operational()
        if len(challenge) != crypto.NONCE_LEN:
            raise ValueError(f"challenge must be {crypto.NONCE_LEN} bytes")
        to_sign = self.compute_state_digest() + bytes(challenge) + crypto.new_nonce(self.rng)
        response = to_sign + crypto.sign(self.secret_key, to_sign)
        assert len(response) == RESPONSE_LEN
        return response

    def simulate_boot(self) -> BootStatus:
        """Re-run boot integrity checks over the stored state documents.

        A device whose stored installation or configuration no longer
        verifies under its own key refuses to attest until reprovisioned.
        """
        if self.fw_slot is None:
            self.boot_status = BootStatus.UNPROGRAMMED
            return self.boot_status
        inst, fw_digest = self.fw_slot
        ok = (
            inst.doc_type == documents.DOC_INSTALLATION
            and documents.subject_uuid(inst) == self.uuid
            and inst.field(documents.INST_FW_DOC_DIGEST) == fw_digest
            and fw_digest in self.verified_digests
            and _signed_by(inst, self.public_key)
        )
        if ok and self.cfg is not None:
            ok = documents.subject_uuid(self.cfg) == self.uuid and _signed_by(self.cfg, self.public_key)
        self.boot_status = BootStatus.OPERATIONAL if ok else BootStatus.INTEGRITY_FAILED
        return self.boot_status


def _signed_by(doc: Document, pk: PublicKey) -> bool:
    if not doc.signatures:
        return False
    return all(
        hint == crypto.key_id(pk) and crypto.verify(pk, documents.signing_payload(doc, i), sig)
        for i, (hint, sig) in enumerate(doc.signatures)
    )


def device_birth(
    mfr_cert: Document, mfr_sk: SecretKey, root: Document, dinf: str, rng=None
) -> tuple[DeviceState, Document]:
    """Provision a new device: UUID, keypair, and a chained certificate.

    The device keeps only the certificate digest and a copy of the root; the
    full certificate is returned for registration with the store.
    """
    result = documents.verify_chain([mfr_cert, root], root)
    if not result:
        raise ChainInvalid(f"manufacturer does not chain to the root: {result.reason}")
    if crypto.public_key_of(mfr_sk) != documents.embedded_public_key(mfr_cert):
        raise InvalidKey("secret key does not match the manufacturer certificate")
    uuid = crypto.generate_uuid(rng)
    public_key, secret_key = crypto.generate_keypair(rng)
    dcrt = documents.make_device_certificate(dinf, public_key, uuid, mfr_cert, mfr_sk)
    dev = DeviceState(
        uuid=uuid,
        public_key=public_key,
        secret_key=secret_key,
        cert_digest=documents.doc_digest(dcrt),
        trusted_root=root,
        rng=rng,
    )
    return dev, dcrt


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_device(dev: DeviceState, path) -> None:
    """Write the `.tltdev` state file (everything except the secret key).

    Layout: magic(4) version(1) boot_status(1) uuid(16) suite(1) pubkey(32)
    cert_digest(32), root as len(4)+bytes, digest count(4) + 32-byte digests
    (sorted), fw flag(1) [inst len(4)+bytes, fw doc digest(32)], cfg flag(1)
    [len(4)+bytes].
    """
    out = bytearray(_DEV_MAGIC)
    out.append(_DEV_VERSION)
    out.append(dev.boot_status.value)
    out += dev.uuid
    out.append(dev.public_key.suite_id)
    out += dev.public_key.data
    out += dev.cert_digest
    root_bytes = documents.encode_canonical(dev.trusted_root)
    out += len(root_bytes).to_bytes(4, "big")
    out += root_bytes
    out += len(dev.verified_digests).to_bytes(4, "big")
    for d in sorted(dev.verified_digests):
        out += d
    if dev.fw_slot is not None:
        inst, fw_digest = dev.fw_slot
        inst_bytes = documents.encode_canonical(inst)
        out.append(1)
        out += len(inst_bytes).to_bytes(4, "big")
        out += inst_bytes
        out += fw_digest
    else:
        out.append(0)
    if dev.cfg is not None:
        cfg_bytes = documents.encode_canonical(dev.cfg)
        out.append(1)
        out += len(cfg_bytes).to_bytes(4, "big")
        out += cfg_bytes
    else:
        out.append(0)
    Path(path).write_bytes(bytes(out))


def load_device(path, key_path=None, rng=None) -> DeviceState:
    """Load a `.tltdev` file plus its secret key (sibling `.tltkey` by default)."""
    path = Path(path)
    raw = path.read_bytes()
    r = _Reader(raw)
    if r.take(4) != _DEV_MAGIC:
        raise MalformedDocument("not a device state file")
    if r.u8() != _DEV_VERSION:
        raise MalformedDocument("unsupported device state version")
    try:
        status = BootStatus(r.u8())
    except ValueError:
        raise MalformedDocument("bad boot status byte") from None
    uuid = r.take(crypto.UUID_LEN)
    suite = r.u8()
    pk = PublicKey(suite, r.take(crypto.PUBLIC_KEY_LEN))
    cert_digest = r.take(crypto.DIGEST_LEN)
    root = documents.decode(r.take(r.u32()))
    digests = {r.take(crypto.DIGEST_LEN) for _ in range(r.u32())}
    fw_slot = None
    if r.u8():
        inst = documents.decode(r.take(r.u32()))
        fw_slot = (inst, r.take(crypto.DIGEST_LEN))
    cfg = documents.decode(r.take(r.u32())) if r.u8() else None
    if not r.done():
        raise MalformedDocument("trailing bytes in device state file")

    key_path = Path(key_path) if key_path else path.with_suffix(crypto.SECRET_KEY_EXT)
    sk = crypto.load_secret_key(key_path)
    if crypto.public_key_of(sk) != pk:
        raise InvalidKey("key file does not match the stored public key")
    return DeviceState(
        uuid=uuid,
        public_key=pk,
        secret_key=sk,
        cert_digest=cert_digest,
        trusted_root=root,
        verified_digests=digests,
        fw_slot=fw_slot,
        cfg=cfg,
        boot_status=status,
        rng=rng,
    )


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise MalformedDocument("truncated device state file")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def done(self) -> bool:
        return self._pos == len(self._data)
