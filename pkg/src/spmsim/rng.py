"""SplitMix64 streams keyed by integer tuples.

Every random draw in the simulator comes from a stream derived from
``(seed, key...)``, so generation is a pure function of those keys and
independent of evaluation order.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = seed & MASK64

    @classmethod
    def keyed(cls, seed: int, *keys: int) -> "SplitMix64":
        state = seed & MASK64
        for k in keys:
            state = mix64((state ^ (k & MASK64)) + GOLDEN & MASK64)
        return cls(state)

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by multiply-shift."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next() * n) >> 64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits."""
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> list:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items
