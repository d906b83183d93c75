"""Memory map of the engine."""
from dataclasses import dataclass
from enum import IntEnum


class Region(IntEnum):
    WEIGHT = 0
    INDEX = 1
    ACT_A = 2
    ACT_B = 3
    OUTPUT = 4


@dataclass(frozen=True)
class MemoryConfig:
    """Region capacities in bytes (the six data memories total 104 KB)."""

    weight_gb: int = 65536
    index_sram: int = 8192
    act_gb_a: int = 14336
    act_gb_b: int = 14336
    in_act_buf: int = 2048
    out_act_buf: int = 2048
    instr_words: int = 4096
    prep_bandwidth: int = 32        # bytes staged into the input buffer per cycle
    pingpong: bool = True           # False spills every layer output off-chip

    def __post_init__(self):
        sizes = (self.weight_gb, self.index_sram, self.act_gb_a, self.act_gb_b,
                 self.in_act_buf, self.out_act_buf, self.instr_words, self.prep_bandwidth)
        if min(sizes) < 1:
            raise ValueError("memory sizes must be positive")

    @property
    def total_bytes(self):
        return (self.weight_gb + self.index_sram + self.act_gb_a + self.act_gb_b
                + self.in_act_buf + self.out_act_buf)

    def capacity(self, region):
        return {Region.WEIGHT: self.weight_gb, Region.INDEX: self.index_sram,
                Region.ACT_A: self.act_gb_a, Region.ACT_B: self.act_gb_b,
                Region.OUTPUT: self.out_act_buf}[Region(region)]
