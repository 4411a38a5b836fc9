"""In-memory raster images and PNG/JPEG pixel codecs (Pillow-backed)."""

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from qrkey.errors import ImageFormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
JPEG_SOI = b"\xff\xd8"


def sniff_format(data):
    if data.startswith(PNG_SIGNATURE):
        return "PNG"
    if data.startswith(JPEG_SOI):
        return "JPEG"
    raise ImageFormatError("not a PNG or JPEG file")


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Pixel grid of 8-bit samples, shape (height, width, channels)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        px = np.ascontiguousarray(px, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def channels(self):
        return self.pixels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def gray(self):
        """Luma as a 2-D uint8 array (ITU-R 601 weights)."""
        if self.channels == 1:
            return self.pixels[:, :, 0]
        rgb = self.pixels.astype(np.uint32)
        luma = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
        return luma.astype(np.uint8)

    def to_pil(self):
        if self.channels == 1:
            return Image.fromarray(self.pixels[:, :, 0], mode="L")
        return Image.fromarray(self.pixels, mode="RGB")

    @classmethod
    def from_pil(cls, img):
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        return cls(np.asarray(img))

    def encode(self, fmt="PNG", quality=75):
        buf = io.BytesIO()
        if fmt == "JPEG":
            self.to_pil().save(buf, format="JPEG", quality=quality)
        elif fmt == "PNG":
            self.to_pil().save(buf, format="PNG")
        else:
            raise ValueError(f"unsupported format {fmt!r}")
        return buf.getvalue()

    def to_png(self):
        return self.encode("PNG")

    def to_jpeg(self, quality=75):
        return self.encode("JPEG", quality)

    @classmethod
    def from_bytes(cls, data):
        sniff_format(data)
        try:
            with Image.open(io.BytesIO(data)) as img:
                img.load()
                return cls.from_pil(img)
        except (OSError, SyntaxError, ValueError) as exc:
            raise ImageFormatError(f"cannot decode image: {exc}") from exc

    def resized(self, width, height, method="bilinear"):
        resample = {"bilinear": Image.BILINEAR, "nearest": Image.NEAREST}[method]
        return RasterImage.from_pil(self.to_pil().resize((width, height), resample=resample))
