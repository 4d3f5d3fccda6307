"""snapforge: a desk-scale fashion search platform.

Subsystems: an in-process stream engine running a focused-crawler topology,
an embedded message log feeding an image-analytics pipeline, a full-text
product index, a DCGAN discriminator embedder, a vector similarity index,
an offline retrieval benchmark, and an HTTP search service.
"""

__version__ = "0.1.0"
