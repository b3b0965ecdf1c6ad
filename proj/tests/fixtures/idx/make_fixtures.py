"""Writes small IDX fixtures in the Fashion-MNIST layout (28x28 uint8, labels 0-9)."""
import gzip
import random
import struct

rng = random.Random(20261015)
count, rows, cols = 60, 28, 28
labels = [i % 10 for i in range(count)]
pixels = bytearray()
for label in labels:
    cx, cy = 6 + 2 * label, 14
    for y in range(rows):
        for x in range(cols):
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            v = max(0, 255 - 6 * d2) if d2 < 40 + 4 * label else rng.randrange(0, 24)
            pixels.append(v)

images = struct.pack(">IIII", 0x00000803, count, rows, cols) + bytes(pixels)
label_bytes = struct.pack(">II", 0x00000801, count) + bytes(labels)

with open("sample-images-idx3-ubyte", "wb") as f:
    f.write(images)
with open("sample-labels-idx1-ubyte", "wb") as f:
    f.write(label_bytes)
with open("sample-images-idx3-ubyte.gz", "wb") as f:
    f.write(gzip.compress(images, mtime=0))
with open("sample-labels-idx1-ubyte.gz", "wb") as f:
    f.write(gzip.compress(label_bytes, mtime=0))
# Corrupted magics: images tagged as labels, and a wrong element type byte.
with open("bad-magic-images-idx3-ubyte", "wb") as f:
    f.write(struct.pack(">I", 0x00000801) + images[4:])
with open("bad-type-labels-idx1-ubyte", "wb") as f:
    f.write(struct.pack(">I", 0x00000901) + label_bytes[4:])
with open("truncated-images-idx3-ubyte", "wb") as f:
    f.write(images[:-100])
