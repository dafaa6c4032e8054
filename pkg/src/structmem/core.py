"""Core value types: unit-norm structure embeddings, binary silhouette masks,
garment attribute sets and the deterministic attribute codebook."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import (
    DimMismatchError,
    EmptyMaskError,
    NonFiniteError,
    ShapeMismatchError,
    UnknownValueError,
    ZeroVectorError,
)

DEFAULT_DIM = 768
ATTR_CODE_DIM = 32

# The ten encoded attributes, in fixed concatenation order (category first).
ATTRIBUTE_ORDER = (
    "category",
    "fit",
    "collar",
    "sleeve_length",
    "fabric",
    "length",
    "with_inner_wear",
    "sleeves_rolled_up",
    "top_open",
    "top_tuck_in",
)

VOCABULARIES = {
    "category": (
        "T-shirt", "Hoodie", "Shirt", "Polo", "Tank", "Vest", "Swimsuit",
        "Sweater", "Innerwear", "Windbreaker", "Down Jacket", "Jacket",
        "Suit", "Waistcoat", "Shawl", "Dress", "Skirt", "Knitted Coat",
        "Leather Short Coat", "Leather Long Coat", "Denim Jacket", "Robe",
        "Loungewear Top", "Loungewear Dress", "Sports Jacket",
        "Knitted Cardigan", "Leather Jacket",
    ),
    "fit": ("Loose", "Regular", "Slim"),
    "collar": (
        "Suit", "Shirt", "Notched", "Rounded", "Ruffled", "Naval", "Hooded",
        "Polo", "V-neck", "Square", "Round", "Strapless", "One-shoulder",
        "Off-shoulder", "Neckline", "Stand-up", "Baseball",
    ),
    "sleeve_length": ("Sleeveless", "Short", "Mid", "Long", "Extra Long"),
    "fabric": (
        "Gauze", "Tweed", "Fur", "Chiffon", "Denim", "PVC", "Micro-Suede",
        "Fleece", "Corduroy", "Knit", "Lace", "Synthetic", "Stretch",
        "Linen", "Wool", "Silk", "Knitting", "Leather", "Velvet",
        "Fur Blend", "Coated", "Mixed", "Special Fabric",
    ),
    "length": ("Extra Short", "Short", "Medium", "Long", "Extra Long", "Uncertain"),
    "with_inner_wear": ("Yes", "No"),
    "sleeves_rolled_up": ("Yes", "No"),
    "top_open": ("Yes", "No"),
    "top_tuck_in": ("Yes", "No"),
}


@dataclass(frozen=True)
class StructureEmbedding:
    """A unit-L2-norm latent structure vector.

    Construct through :func:`normalize`; direct construction assumes the
    vector is already unit length (used when loading float32 storage
    bit-exactly).
    """

    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]

    def __eq__(self, other):
        if not isinstance(other, StructureEmbedding):
            return NotImplemented
        return self.vector.shape == other.vector.shape and bool(
            np.array_equal(self.vector, other.vector)
        )

    def __hash__(self):
        return hash(self.vector.tobytes())


def normalize(vector) -> StructureEmbedding:
    """Project a raw vector onto the unit sphere.

    Raises ZeroVectorError for (near-)zero input and NonFiniteError if any
    component is NaN or infinite.
    """
    v = np.asarray(vector, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ZeroVectorError("empty vector")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("vector contains NaN or Inf")
    norm = float(np.linalg.norm(v))
    if norm <= 1e-12:
        raise ZeroVectorError(f"vector norm {norm} below 1e-12")
    return StructureEmbedding(v / norm)


@dataclass(frozen=True)
class LandmarkMask:
    """Binary raster of a flat-lay garment silhouette."""

    bits: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ShapeMismatchError(f"mask must be 2-D and nonempty, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def foreground_count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, LandmarkMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(
            np.array_equal(self.bits, other.bits)
        )

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    # --- serialization ------------------------------------------------

    def to_png_bytes(self) -> bytes:
        img = Image.fromarray(self.bits.astype(np.uint8) * 255, mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "LandmarkMask":
        img = Image.open(io.BytesIO(data)).convert("L")
        arr = np.asarray(img, dtype=np.uint8)
        return cls(arr >= 128)

    def save_png(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_png_bytes())

    @classmethod
    def load_png(cls, path) -> "LandmarkMask":
        with open(path, "rb") as fh:
            return cls.from_png_bytes(fh.read())

    def to_pbm(self) -> str:
        rows = [" ".join("1" if v else "0" for v in row) for row in self.bits]
        return f"P1\n{self.width} {self.height}\n" + "\n".join(rows) + "\n"

    @classmethod
    def from_pbm(cls, text: str) -> "LandmarkMask":
        tokens = []
        for line in text.splitlines():
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
        if not tokens or tokens[0] != "P1":
            raise ShapeMismatchError("not an ASCII PBM (P1) file")
        width, height = int(tokens[1]), int(tokens[2])
        pixels = [t == "1" for t in tokens[3 : 3 + width * height]]
        if len(pixels) != width * height:
            raise ShapeMismatchError("PBM pixel count does not match header")
        return cls(np.array(pixels, dtype=bool).reshape(height, width))

    @classmethod
    def load(cls, path) -> "LandmarkMask":
        p = str(path)
        if p.endswith(".pbm"):
            with open(p, "r") as fh:
                return cls.from_pbm(fh.read())
        return cls.load_png(p)


def require_nonempty(mask: LandmarkMask) -> LandmarkMask:
    if mask.foreground_count == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    return mask


@dataclass(frozen=True)
class AttributeSet:
    """The ten discrete garment attributes used for structure encoding.

    Values are validated (after trimming) against the closed vocabularies.
    Non-encoded attributes (print, surface texture, age, gender, ...) may be
    carried in ``extra`` but are never encoded.
    """

    category: str
    fit: str
    collar: str
    sleeve_length: str
    fabric: str
    length: str
    with_inner_wear: str
    sleeves_rolled_up: str
    top_open: str
    top_tuck_in: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ATTRIBUTE_ORDER:
            value = getattr(self, name).strip()
            if value not in VOCABULARIES[name]:
                raise UnknownValueError(name, getattr(self, name))
            object.__setattr__(self, name, value)

    def values_in_order(self) -> tuple:
        return tuple(getattr(self, name) for name in ATTRIBUTE_ORDER)

    def to_dict(self) -> dict:
        d = {name: getattr(self, name) for name in ATTRIBUTE_ORDER}
        if self.extra:
            d["extra"] = dict(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeSet":
        kwargs = {name: d[name] for name in ATTRIBUTE_ORDER}
        kwargs["extra"] = dict(d.get("extra", {}))
        return cls(**kwargs)


class AttributeCodebook:
    """Seeded deterministic code table: (attribute, value) -> unit 32-vector.

    Codes are drawn uniform in [-1, 1] from a PCG64 stream keyed by the seed,
    walking attributes and vocabulary entries in fixed table order, then each
    32-vector is L2-normalized. Identical seed gives a bit-identical table.
    """

    def __init__(self, seed: int, code_dim: int = ATTR_CODE_DIM):
        self.seed = int(seed)
        self.code_dim = int(code_dim)
        rng = np.random.default_rng(self.seed)
        self._codes: dict[tuple[str, str], np.ndarray] = {}
        for name in ATTRIBUTE_ORDER:
            for value in VOCABULARIES[name]:
                raw = rng.uniform(-1.0, 1.0, size=self.code_dim)
                code = raw / np.linalg.norm(raw)
                code.setflags(write=False)
                self._codes[(name, value)] = code

    def code(self, attribute: str, value: str) -> np.ndarray:
        key = (attribute, value.strip())
        if key not in self._codes:
            raise UnknownValueError(attribute, value)
        return self._codes[key]

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "code_dim": self.code_dim,
            "codes": {
                f"{name}\t{value}": code.tolist()
                for (name, value), code in self._codes.items()
            },
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "AttributeCodebook":
        payload = json.loads(text)
        book = cls(payload["seed"], payload.get("code_dim", ATTR_CODE_DIM))
        # Stored codes are authoritative; verify the seed regenerates them.
        for key, values in payload["codes"].items():
            name, value = key.split("\t", 1)
            if not np.allclose(book.code(name, value), values, atol=1e-12):
                raise NonFiniteError("codebook JSON inconsistent with its seed")
        return book


def encode_attributes(attrs: AttributeSet, codebook: AttributeCodebook) -> np.ndarray:
    """Concatenate the ten attribute code vectors in fixed order (10 x 32 = 320)."""
    parts = [codebook.code(name, getattr(attrs, name)) for name in ATTRIBUTE_ORDER]
    return np.concatenate(parts)


def concat_features(
    f_img, f_attr, d_img: int = DEFAULT_DIM, d_attr: int = ATTR_CODE_DIM * 10
) -> np.ndarray:
    """Concatenate image features with attribute features (default 768 + 320)."""
    f_img = np.asarray(f_img, dtype=np.float64).reshape(-1)
    f_attr = np.asarray(f_attr, dtype=np.float64).reshape(-1)
    if f_img.shape[0] != d_img:
        raise DimMismatchError(f"image features: expected {d_img}, got {f_img.shape[0]}")
    if f_attr.shape[0] != d_attr:
        raise DimMismatchError(f"attribute features: expected {d_attr}, got {f_attr.shape[0]}")
    return np.concatenate([f_img, f_attr])


@dataclass(frozen=True)
class MemoryRecord:
    """One database entry: embedding + landmark + metadata."""

    id: str
    embedding: StructureEmbedding
    landmark: LandmarkMask
    category: str
    attributes: AttributeSet | None = None
    source: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be nonempty")
