import enum


class Axis(enum.Enum):
    x = 0
    y = 1
    z = 2

    @classmethod
    def parse(cls, value: "str | Axis") -> "Axis":
        if isinstance(value, Axis):
            return value
        try:
            return cls[value.lower()]
        except KeyError:
            raise ValueError(f"Unknown axis {value!r}, expected one of x, y, z") from None


class Species(enum.Enum):
    ion = "ion"
    nanoparticle = "nanoparticle"


class SolverBranch(enum.Enum):
    auto = "auto"
    nanoparticle_limit = "nanoparticle-limit"
    ion_branch = "ion-branch"
    full_quartic = "full-quartic"


class Layout(enum.Enum):
    on_axis_x = "on-axis-x"
    on_axis_y = "on-axis-y"
    on_axis_z = "on-axis-z"
    off_axis = "off-axis"

    @classmethod
    def on_axis(cls, axis: Axis) -> "Layout":
        return cls(f"on-axis-{axis.name}")

    @property
    def axis(self) -> Axis | None:
        if self is Layout.off_axis:
            return None
        return Axis[self.value[-1]]


class ChainTopology(enum.Enum):
    one_sided = "one-sided"
    symmetric_split = "symmetric-split"
    # more ions on one side than on the other
    asymmetric_split = "asymmetric-split"


class TaskKind(enum.Enum):
    frequencies = "frequencies"
    equilibria = "equilibria"
    couplings = "couplings"
    steady_state = "steady-state"
    floquet = "floquet"
    n_ion_sweep = "n-ion-sweep"


class SweepScale(enum.Enum):
    linear = "linear"
    log = "log"


# sweepable parameter -> quantity kind used to parse its bounds
SWEEP_PARAMETERS = {
    "particle-charge": "charge",
    "particle-mass": "mass",
    "particle-damping": "frequency",
    "feedback-damping": "frequency",
    "doppler-damping": "frequency",
    "displacement-heating-power": "power",
    "pressure": "pressure",
    "ion-count": "count",
}
