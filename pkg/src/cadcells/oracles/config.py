from __future__ import annotations

from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class OracleConfig:
    """Tolerances and budgets shared by the oracles.

    All catalog geometry is unit scale, so absolute tolerances are used.
    """

    eps_levels: int = 20          # witness radii 2^-1 .. 2^-eps_levels
    tau_fib: float = 1e-6         # fiber endpoint / isolated point accuracy
    tau_homeo: float = 1e-9       # round-trip accuracy of map pairs
    tau_scan: float = 1e-2        # fiber scan step
    scan_limit: float = 8.0       # fibers are scanned on [-scan_limit, scan_limit]
    radius_factor: float = 3.0    # neighbour radius / sample spacing (lbc graphs)
    divergence: float = 1e6       # threshold for "tends to -infinity"
    width_floor: float = 1e-12    # relative enclosure width accepted as equality
    box: float = 8.0              # sampling box [-box, box]^n
    samples: int = 10_000         # samples per side of a two-sided check
    inconclusive_cap: float = 0.02
    candidates: int = 24          # witness search candidates per point and step
    stall_steps: int = 50         # witness search steps without progress before giving up
    cert_boxes: int = 4000        # box budget of one subdivision certificate

    @property
    def eps_min(self) -> float:
        return 2.0 ** -self.eps_levels

    def with_(self, **kw) -> "OracleConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)
