"""Canonical documents and chain-of-trust verification.

Every signed artefact in the ecosystem (certificates, firmware documents,
installation and configuration proofs) is a Document: a type tag, an ordered
field list, and zero or more appended signatures.

Wire format (the `.tltdoc` file content is exactly these bytes):

    doc_type     1 byte   (0x01..0x06)
    field_count  1 byte
    fields       field_count times: tag(1) || length(4, big-endian) || value
    signatures   repeated to end: signer_hint(16) || signature(64)

Field tags are strictly ascending within a document, so the encoding is
injective and byte-stable. Signature i covers the canonical encoding of the
doc_type, all fields, and signatures 0..i-1, i.e. the byte prefix that
precedes it. The signer hint is the key id of the signing key and is checked
during verification, so every byte of a document is covered by some check.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import crypto
from .crypto import PublicKey, SecretKey
from .errors import ConstraintViolation, InvalidKey, MalformedDocument, NonCanonicalField

DOC_ROOT = 0x01
DOC_MANUFACTURER = 0x02
DOC_DEVICE = 0x03
DOC_FIRMWARE = 0x04
DOC_INSTALLATION = 0x05
DOC_CONFIGURATION = 0x06

KNOWN_DOC_TYPES = frozenset(
    {DOC_ROOT, DOC_MANUFACTURER, DOC_DEVICE, DOC_FIRMWARE, DOC_INSTALLATION, DOC_CONFIGURATION}
)

DOC_TYPE_NAMES = {
    DOC_ROOT: "root",
    DOC_MANUFACTURER: "manufacturer",
    DOC_DEVICE: "device",
    DOC_FIRMWARE: "firmware",
    DOC_INSTALLATION: "installation",
    DOC_CONFIGURATION: "configuration",
}

# Field tags, per document type. Tags are meaningful only together with the
# doc_type; numbering restarts at 0x01 for each type and stays ascending.
ROOT_INFO = 0x01
ROOT_PUBKEY = 0x02

MFR_INFO = 0x01
MFR_ID = 0x02
MFR_PUBKEY = 0x03

DEV_INFO = 0x01
DEV_PUBKEY = 0x02
DEV_UUID = 0x03
DEV_MFR_ID = 0x04

FW_META = 0x01
FW_IMAGE_DIGEST = 0x02
FW_MFR_ID = 0x03

INST_FW_DOC_DIGEST = 0x01
INST_UUID = 0x02
INST_INFO = 0x03

CFG_DIGEST = 0x01
CFG_UUID = 0x02
CFG_SEQ = 0x03

MFR_ID_LEN = 16
SIG_ENTRY_LEN = crypto.KEY_ID_LEN + crypto.SIGNATURE_LEN
_PK_FIELD_LEN = 1 + crypto.PUBLIC_KEY_LEN

# child doc_type -> doc_types allowed to issue (sign) it
_LEGAL_ISSUERS = {
    DOC_MANUFACTURER: (DOC_ROOT,),
    DOC_DEVICE: (DOC_MANUFACTURER,),
    DOC_FIRMWARE: (DOC_MANUFACTURER,),
    DOC_INSTALLATION: (DOC_DEVICE,),
    DOC_CONFIGURATION: (DOC_DEVICE,),
}

# doc_type -> tag of the embedded public key, for types that carry one
_EMBEDDED_KEY_TAG = {
    DOC_ROOT: ROOT_PUBKEY,
    DOC_MANUFACTURER: MFR_PUBKEY,
    DOC_DEVICE: DEV_PUBKEY,
}

# doc_type -> exact required field layout: (tag, fixed_length or None)
_REQUIRED_FIELDS = {
    DOC_ROOT: ((ROOT_INFO, None), (ROOT_PUBKEY, _PK_FIELD_LEN)),
    DOC_MANUFACTURER: ((MFR_INFO, None), (MFR_ID, MFR_ID_LEN), (MFR_PUBKEY, _PK_FIELD_LEN)),
    DOC_DEVICE: (
        (DEV_INFO, None),
        (DEV_PUBKEY, _PK_FIELD_LEN),
        (DEV_UUID, crypto.UUID_LEN),
        (DEV_MFR_ID, MFR_ID_LEN),
    ),
    DOC_FIRMWARE: ((FW_META, None), (FW_IMAGE_DIGEST, crypto.DIGEST_LEN), (FW_MFR_ID, MFR_ID_LEN)),
    DOC_INSTALLATION: (
        (INST_FW_DOC_DIGEST, crypto.DIGEST_LEN),
        (INST_UUID, crypto.UUID_LEN),
        (INST_INFO, None),
    ),
    DOC_CONFIGURATION: (
        (CFG_DIGEST, crypto.DIGEST_LEN),
        (CFG_UUID, crypto.UUID_LEN),
        (CFG_SEQ, 8),
    ),
}

DOC_FILE_EXT = ".tltdoc"


@dataclass(frozen=True)
class Document:
    """Canonical signed artefact. Immutable; signing returns a new value."""

    doc_type: int
    fields: tuple[tuple[int, bytes], ...]
    signatures: tuple[tuple[bytes, bytes], ...] = ()

    def field(self, tag: int) -> bytes:
        for t, value in self.fields:
            if t == tag:
                return value
        raise KeyError(f"no field 0x{tag:02x} in {DOC_TYPE_NAMES.get(self.doc_type, '?')} document")


# ---------------------------------------------------------------------------
# Canonical encoding
# ---------------------------------------------------------------------------

def encode_canonical(doc: Document) -> bytes:
    """Deterministic byte encoding; raises NonCanonicalField on bad shape."""
    return _encode(doc, len(doc.signatures))


def signing_payload(doc: Document, num_signatures: int) -> bytes:
    """The bytes covered by signature number num_signatures (0-based)."""
    return _encode(doc, num_signatures)


def _encode(doc: Document, num_signatures: int) -> bytes:
    if doc.doc_type not in KNOWN_DOC_TYPES:
        raise NonCanonicalField(f"unknown doc_type 0x{doc.doc_type:02x}")
    if len(doc.fields) > 0xFF:
        raise NonCanonicalField("too many fields")
    out = bytearray([doc.doc_type, len(doc.fields)])
    prev_tag = -1
    for tag, value in doc.fields:
        if not 0 <= tag <= 0xFF:
            raise NonCanonicalField(f"field tag {tag} out of range")
        if tag <= prev_tag:
            raise NonCanonicalField("field tags must be strictly ascending")
        if len(value) > 0xFFFFFFFF:
            raise NonCanonicalField("field value too long")
        prev_tag = tag
        out.append(tag)
        out += len(value).to_bytes(4, "big")
        out += value
    for hint, sig in doc.signatures[:num_signatures]:
        if len(hint) != crypto.KEY_ID_LEN or len(sig) != crypto.SIGNATURE_LEN:
            raise NonCanonicalField("malformed signature entry")
        out += hint
        out += sig
    return bytes(out)


def decode(data: bytes) -> Document:
    """Exact inverse of encode_canonical; raises MalformedDocument otherwise."""
    data = bytes(data)
    if len(data) < 2:
        raise MalformedDocument("truncated header")
    doc_type = data[0]
    if doc_type not in KNOWN_DOC_TYPES:
        raise MalformedDocument(f"unknown doc_type 0x{doc_type:02x}")
    field_count = data[1]
    pos = 2
    fields = []
    prev_tag = -1
    for _ in range(field_count):
        if pos + 5 > len(data):
            raise MalformedDocument("truncated field header")
        tag = data[pos]
        if tag <= prev_tag:
            raise MalformedDocument("field tags not strictly ascending")
        prev_tag = tag
        length = int.from_bytes(data[pos + 1 : pos + 5], "big")
        pos += 5
        if pos + length > len(data):
            raise MalformedDocument("field length overflows document")
        fields.append((tag, data[pos : pos + length]))
        pos += length
    remainder = len(data) - pos
    if remainder % SIG_ENTRY_LEN != 0:
        raise MalformedDocument("trailing bytes are not whole signature entries")
    signatures = []
    while pos < len(data):
        signatures.append(
            (data[pos : pos + crypto.KEY_ID_LEN], data[pos + crypto.KEY_ID_LEN : pos + SIG_ENTRY_LEN])
        )
        pos += SIG_ENTRY_LEN
    return Document(doc_type, tuple(fields), tuple(signatures))


def append_signature(doc: Document, sk: SecretKey) -> Document:
    """Sign the document's current canonical bytes and append the signature."""
    pk = crypto.public_key_of(sk)
    sig = crypto.sign(sk, signing_payload(doc, len(doc.signatures)))
    return Document(doc.doc_type, doc.fields, doc.signatures + ((crypto.key_id(pk), sig),))


def doc_digest(doc: Document) -> bytes:
    """Digest of the full canonical encoding (identity of a document)."""
    return crypto.digest(encode_canonical(doc))


def save_document(doc: Document, path) -> None:
    Path(path).write_bytes(encode_canonical(doc))


def load_document(path) -> Document:
    return decode(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Field helpers
# ---------------------------------------------------------------------------

def embedded_public_key(doc: Document) -> PublicKey:
    """Public key carried by a certificate-type document."""
    tag = _EMBEDDED_KEY_TAG.get(doc.doc_type)
    if tag is None:
        raise KeyError(f"{DOC_TYPE_NAMES.get(doc.doc_type, '?')} documents carry no key")
    return _parse_pk(doc.field(tag))


def _parse_pk(raw: bytes) -> PublicKey:
    if len(raw) != _PK_FIELD_LEN:
        raise InvalidKey(f"bad public key field length {len(raw)}")
    return PublicKey(raw[0], raw[1:])


def _pk_field(pk: PublicKey) -> bytes:
    return bytes([pk.suite_id]) + pk.data


def issuer_id(doc: Document) -> bytes:
    """The manufacturer id a device-level document claims to descend from."""
    if doc.doc_type == DOC_DEVICE:
        return doc.field(DEV_MFR_ID)
    if doc.doc_type == DOC_FIRMWARE:
        return doc.field(FW_MFR_ID)
    raise KeyError("document carries no manufacturer id")


def subject_uuid(doc: Document) -> bytes:
    """The device UUID a document is about."""
    tag = {DOC_DEVICE: DEV_UUID, DOC_INSTALLATION: INST_UUID, DOC_CONFIGURATION: CFG_UUID}.get(
        doc.doc_type
    )
    if tag is None:
        raise KeyError("document carries no device uuid")
    return doc.field(tag)


def config_seq(doc: Document) -> int:
    return int.from_bytes(doc.field(CFG_SEQ), "big")


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def make_root_certificate(info: str, public_key: PublicKey, secret_key: SecretKey) -> Document:
    """Self-signed root anchoring all chain verification."""
    if crypto.public_key_of(secret_key) != public_key:
        raise InvalidKey("secret key does not match the authority public key")
    doc = Document(
        DOC_ROOT,
        ((ROOT_INFO, info.encode()), (ROOT_PUBKEY, _pk_field(public_key))),
    )
    return append_signature(doc, secret_key)


def make_manufacturer_certificate(
    mfr_info: str, mfr_pk: PublicKey, authority_sk: SecretKey, rng=None
) -> Document:
    """Authority-signed manufacturer certificate with a fresh 16-byte id."""
    mfr_id = crypto.random_bytes(MFR_ID_LEN, rng)
    doc = Document(
        DOC_MANUFACTURER,
        ((MFR_INFO, mfr_info.encode()), (MFR_ID, mfr_id), (MFR_PUBKEY, _pk_field(mfr_pk))),
    )
    return append_signature(doc, authority_sk)


def make_device_certificate(
    dinf: str, device_pk: PublicKey, uuid: bytes, mfr_cert: Document, mfr_sk: SecretKey
) -> Document:
    """Manufacturer-signed device certificate binding info, key and UUID."""
    if crypto.public_key_of(mfr_sk) != embedded_public_key(mfr_cert):
        raise InvalidKey("secret key does not match the manufacturer certificate")
    if not crypto.is_uuid4(uuid):
        raise ConstraintViolation("device uuid is not a valid random UUID")
    doc = Document(
        DOC_DEVICE,
        (
            (DEV_INFO, dinf.encode()),
            (DEV_PUBKEY, _pk_field(device_pk)),
            (DEV_UUID, bytes(uuid)),
            (DEV_MFR_ID, mfr_cert.field(MFR_ID)),
        ),
    )
    return append_signature(doc, mfr_sk)


def sign_firmware(fw_image: bytes, fw_meta: str, mfr_sk: SecretKey, mfr_cert: Document) -> Document:
    """Manufacturer-signed firmware document over the image digest."""
    if crypto.public_key_of(mfr_sk) != embedded_public_key(mfr_cert):
        raise InvalidKey("secret key does not match the manufacturer certificate")
    doc = Document(
        DOC_FIRMWARE,
        (
            (FW_META, fw_meta.encode()),
            (FW_IMAGE_DIGEST, crypto.digest(fw_image)),
            (FW_MFR_ID, mfr_cert.field(MFR_ID)),
        ),
    )
    return append_signature(doc, mfr_sk)


def make_installation_document(
    fw_doc: Document, uuid: bytes, instinfo: str, device_sk: SecretKey
) -> Document:
    """Device-signed confirmation that fw_doc's firmware was installed.

    Stores the digest of the firmware document rather than the document
    itself; the store keeps the full form, so the digest is always
    resolvable.
    """
    doc = Document(
        DOC_INSTALLATION,
        (
            (INST_FW_DOC_DIGEST, doc_digest(fw_doc)),
            (INST_UUID, bytes(uuid)),
            (INST_INFO, instinfo.encode()),
        ),
    )
    return append_signature(doc, device_sk)


def make_configuration_document(
    cfg_payload: bytes, uuid: bytes, seq: int, device_sk: SecretKey
) -> Document:
    """Device-signed record of the configuration payload digest."""
    if not 0 < seq <= 0xFFFFFFFFFFFFFFFF:
        raise ValueError("configuration sequence must be a positive 64-bit integer")
    doc = Document(
        DOC_CONFIGURATION,
        (
            (CFG_DIGEST, crypto.digest(cfg_payload)),
            (CFG_UUID, bytes(uuid)),
            (CFG_SEQ, seq.to_bytes(8, "big")),
        ),
    )
    return append_signature(doc, device_sk)


def empty_configuration_document(uuid: bytes) -> Document:
    """Unsigned stand-in used before a device receives any configuration.

    seq 0 is reserved for this form, so the first real configuration must
    use seq >= 1.
    """
    return Document(
        DOC_CONFIGURATION,
        (
            (CFG_DIGEST, crypto.digest(b"")),
            (CFG_UUID, bytes(uuid)),
            (CFG_SEQ, (0).to_bytes(8, "big")),
        ),
    )


def state_digest(inst_doc: Document, cfg_doc: Document | None, uuid: bytes) -> bytes:
    """Digest keying a device's firmware+configuration state.

    Shared by the device (when answering challenges) and the store (when
    indexing admitted records); both sides must concatenate identically.
    """
    cfg = cfg_doc if cfg_doc is not None else empty_configuration_document(uuid)
    return crypto.digest(encode_canonical(inst_doc) + encode_canonical(cfg))


# ---------------------------------------------------------------------------
# Chain verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainResult:
    """Truthy verification outcome with a diagnostic reason on failure."""

    ok: bool
    reason: str = ""
    constraint: bool = False  # failed on identity binding rather than crypto

    def __bool__(self) -> bool:
        return self.ok


def _fail(reason: str, constraint: bool = False) -> ChainResult:
    return ChainResult(False, reason, constraint)


def _well_formed(doc: Document) -> str | None:
    """Structural check; returns a reason string on failure."""
    layout = _REQUIRED_FIELDS.get(doc.doc_type)
    if layout is None:
        return f"unknown doc_type 0x{doc.doc_type:02x}"
    if len(doc.fields) != len(layout):
        return f"{DOC_TYPE_NAMES[doc.doc_type]} document has wrong field count"
    for (tag, value), (want_tag, want_len) in zip(doc.fields, layout):
        if tag != want_tag:
            return f"{DOC_TYPE_NAMES[doc.doc_type]} document missing field 0x{want_tag:02x}"
        if want_len is not None and len(value) != want_len:
            return f"field 0x{tag:02x} has wrong length"
    if doc.doc_type == DOC_DEVICE and not crypto.is_uuid4(doc.field(DEV_UUID)):
        return "device uuid is not a valid random UUID"
    for hint, sig in doc.signatures:
        if len(hint) != crypto.KEY_ID_LEN or len(sig) != crypto.SIGNATURE_LEN:
            return "malformed signature entry"
    return None


def _signatures_verify(doc: Document, issuer_pk: PublicKey) -> str | None:
    if not doc.signatures:
        return f"{DOC_TYPE_NAMES[doc.doc_type]} document is unsigned"
    want_hint = crypto.key_id(issuer_pk)
    for i, (hint, sig) in enumerate(doc.signatures):
        if hint != want_hint:
            return "signer hint does not match the issuing key"
        if not crypto.verify(issuer_pk, signing_payload(doc, i), sig):
            return f"signature {i} on {DOC_TYPE_NAMES[doc.doc_type]} document does not verify"
    return None


def verify_chain(chain: list[Document] | tuple[Document, ...], root: Document) -> ChainResult:
    """Verify a leaf-to-root document chain against a trust anchor.

    The chain is ordered leaf first and must end with the root itself. Each
    document's signatures must verify under the embedded key of the next
    document, the final document must byte-equal the anchor and self-verify,
    and identity bindings must hold: device-level documents carry the id of
    the manufacturer that signed them; installation and configuration
    documents carry the UUID of the device certificate that signed them.

    Failures return a falsy ChainResult carrying a diagnostic reason.
    """
    if not chain:
        return _fail("empty chain")
    for doc in chain:
        reason = _well_formed(doc)
        if reason:
            return _fail(reason)

    anchor = chain[-1]
    if anchor.doc_type != DOC_ROOT:
        return _fail("chain does not end at a root certificate")
    try:
        if encode_canonical(anchor) != encode_canonical(root):
            return _fail("chain root differs from the trust anchor")
    except NonCanonicalField as exc:
        return _fail(str(exc))
    if len(anchor.signatures) != 1:
        return _fail("root certificate must carry exactly one signature")
    try:
        root_pk = embedded_public_key(anchor)
    except InvalidKey as exc:
        return _fail(str(exc))
    reason = _signatures_verify(anchor, root_pk)
    if reason:
        return _fail(f"root does not self-verify: {reason}")

    for child, issuer in zip(chain, chain[1:]):
        allowed = _LEGAL_ISSUERS.get(child.doc_type, ())
        if issuer.doc_type not in allowed:
            return _fail(
                f"{DOC_TYPE_NAMES.get(issuer.doc_type, '?')} document cannot issue "
                f"{DOC_TYPE_NAMES.get(child.doc_type, '?')} documents"
            )
        if child.doc_type in (DOC_DEVICE, DOC_FIRMWARE):
            if issuer_id(child) != issuer.field(MFR_ID):
                return _fail("manufacturer id does not match the issuing certificate", constraint=True)
        if child.doc_type in (DOC_INSTALLATION, DOC_CONFIGURATION):
            if subject_uuid(child) != issuer.field(DEV_UUID):
                return _fail("device uuid does not match the signing certificate", constraint=True)
        try:
            issuer_pk = embedded_public_key(issuer)
        except InvalidKey as exc:
            return _fail(str(exc))
        reason = _signatures_verify(child, issuer_pk)
        if reason:
            return _fail(reason)

    return ChainResult(True)


def verify_installation(inst: Document, dcrt: Document, fw_doc: Document) -> bool:
    """True iff inst confirms installation of fw_doc on the device of dcrt."""
    if inst.doc_type != DOC_INSTALLATION or dcrt.doc_type != DOC_DEVICE:
        return False
    if fw_doc.doc_type != DOC_FIRMWARE:
        return False
    if _well_formed(inst) or _well_formed(dcrt):
        return False
    if inst.field(INST_UUID) != dcrt.field(DEV_UUID):
        return False
    if inst.field(INST_FW_DOC_DIGEST) != doc_digest(fw_doc):
        return False
    try:
        device_pk = embedded_public_key(dcrt)
    except InvalidKey:
        return False
    return _signatures_verify(inst, device_pk) is None
