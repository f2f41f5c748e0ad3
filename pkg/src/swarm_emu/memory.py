"""Registered data regions.

Copy descriptors and NVMe data pointers address memory as (region id, byte
offset), modeling physical address ranges registered with the device. A
region is any writable buffer exposing the buffer protocol.
"""

import numpy as np

# Well-known region ids used by the device.
REGION_STORE = 0  # emulated storage block space (device-internal)
REGION_IO = 1     # default I/O buffer region registered by the workload


class RegionTable:
    """Maps region ids to registered buffers and serves raw byte copies."""

    def __init__(self):
        self._mv: dict[int, memoryview] = {}
        self._np: dict[int, np.ndarray] = {}
        self._raw: dict[int, object] = {}

    def register(self, rid: int, buf) -> None:
        if rid in self._mv:
            raise ValueError(f"region {rid} already registered")
        mv = memoryview(buf).cast("B")
        if mv.readonly:
            raise ValueError(f"region {rid} buffer is read-only")
        self._mv[rid] = mv
        self._np[rid] = np.frombuffer(mv, dtype=np.uint8)
        self._raw[rid] = buf

    def registered(self, rid: int) -> bool:
        return rid in self._mv

    def size(self, rid: int) -> int:
        return len(self._mv[rid])

    def view8(self, rid: int) -> np.ndarray:
        return self._np[rid]

    def mview(self, rid: int) -> memoryview:
        return self._mv[rid]

    def raw(self, rid: int):
        """The registered buffer object itself (fast slicing for bytearrays)."""
        return self._raw[rid]

    def in_range(self, rid: int, off: int, length: int) -> bool:
        mv = self._mv.get(rid)
        return mv is not None and 0 <= off and length >= 1 and off + length <= len(mv)

    def copy(self, dst: tuple[int, int], src: tuple[int, int], length: int) -> None:
        """Raw byte copy between registered regions (bounds already checked)."""
        drid, doff = dst
        srid, soff = src
        self._mv[drid][doff:doff + length] = self._mv[srid][soff:soff + length]
