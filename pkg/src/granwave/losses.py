"""Experiment definitions, datasets, and loss functions.

An experiment couples a lattice to input drives and output probes and scores
the probe series.  Three scoring modes exist: per-frequency cross entropy of
normalized output intensities (waveguide routing), time-domain mean absolute
error against target waveforms (logic gates), and spectral gain error at the
drive frequency (logic gates, frequency domain).

Each loss has a companion that also returns the derivative with respect to
the probe series, which the adjoint integrator consumes.
"""

from dataclasses import dataclass

import numpy as np

from .engine import DriveSignal, run_sim
from .errors import DegenerateInputError

GATE_KINDS = ("and_gate", "xor_gate")
KINDS = ("waveguide",) + GATE_KINDS
LOSSES = ("cross_entropy", "mae_time", "spectral_gain")

# fraction of the run discarded before intensity/MAE windows open
WINDOW_FRACTION = {"waveguide": 1.0 / 3.0, "and_gate": 2.0 / 3.0,
                   "xor_gate": 2.0 / 3.0}

SPECTRAL_WINDOW = 1000  # trailing samples entering the FFT


@dataclass(frozen=True)
class ExperimentSpec:
    """Ports, drive frequencies, and scoring mode for one design task."""

    kind: str
    input_ports: tuple
    output_ports: tuple
    frequencies: tuple
    amplitude: float = 1e-3
    loss: str = "cross_entropy"
    axis: int = 0
    window_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.kind == "waveguide":
            if self.loss != "cross_entropy":
                raise ValueError("waveguide experiments use cross_entropy")
            if len(self.input_ports) != 1 or len(self.output_ports) != 2:
                raise ValueError("waveguide takes 1 input and 2 output ports")
            if len(self.frequencies) != 2:
                raise ValueError("waveguide takes two drive frequencies")
        else:
            if self.loss == "cross_entropy":
                raise ValueError("gates use mae_time or spectral_gain")
            if len(self.input_ports) != 2 or len(self.output_ports) != 1:
                raise ValueError("gates take 2 input and 1 output port")
            if len(self.frequencies) != 1:
                raise ValueError("gates take one drive frequency")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.window_fraction is None:
            object.__setattr__(self, "window_fraction",
                               WINDOW_FRACTION[self.kind])

    @property
    def probes(self):
        return tuple((p, self.axis) for p in self.output_ports)


@dataclass(frozen=True)
class Sample:
    """One forcing case: drives to apply plus the scoring target."""

    label: str
    drives: tuple
    target_port: int | None = None
    target_series: np.ndarray | None = None


@dataclass
class LossReport:
    """Total loss with named per-case partials."""

    total: float
    partials: dict


def default_ports(kind, nx, ny):
    """Port placement used by presets: mid-height column ends, offset rows.

    Waveguide: input at the left mid row; outputs on the right column at
    mid -/+ offset rows, index 0 below, index 1 above.  Gates mirror this:
    inputs left at mid -/+ offset, output right at mid.
    """
    mid = ny // 2
    off = max(1, ny // 4)
    left = lambda row: row * nx
    right = lambda row: row * nx + nx - 1
    if kind == "waveguide":
        return (left(mid),), (right(mid - off), right(mid + off))
    return (left(mid - off), left(mid + off)), (right(mid),)


def recorded_times(n_steps, dt, stride=1):
    """Physical times of the recorded rows (state after steps 1, 1+stride...)."""
    rows = -(-n_steps // stride)
    return (np.arange(rows) * stride + 1) * dt


def make_dataset(spec: ExperimentSpec, n_steps, dt, stride=1):
    """Forcing cases for an experiment.

    Waveguide: one sample per frequency; the first frequency targets output
    port index 1, the second index 0.  Gates: cases 01 (first input driven),
    10 (second), 11 (both); AND targets the drive tone only for 11, XOR for
    01 and 10.
    """
    a = spec.amplitude
    if spec.kind == "waveguide":
        f1, f2 = spec.frequencies
        port = spec.input_ports[0]
        return [
            Sample(label=f"f{f1:g}",
                   drives=(DriveSignal(port, a, f1, spec.axis),),
                   target_port=1),
            Sample(label=f"f{f2:g}",
                   drives=(DriveSignal(port, a, f2, spec.axis),),
                   target_port=0),
        ]
    f = spec.frequencies[0]
    tone = a * np.sin(2.0 * np.pi * f * recorded_times(n_steps, dt, stride))
    silence = np.zeros_like(tone)
    p1, p2 = spec.input_ports
    d1 = DriveSignal(p1, a, f, spec.axis)
    d2 = DriveSignal(p2, a, f, spec.axis)
    if spec.kind == "and_gate":
        targets = (silence, silence, tone)
    else:
        targets = (tone, tone, silence)
    return [
        Sample(label="01", drives=(d1,), target_series=targets[0]),
        Sample(label="10", drives=(d2,), target_series=targets[1]),
        Sample(label="11", drives=(d1, d2), target_series=targets[2]),
    ]


def cross_entropy_loss(intensities, targets):
    """Mean cross entropy of softmaxed normalized intensity pairs (Eq. form:
    intensities are normalized to probabilities, then scored against the
    one-hot targets through a softmax).

    intensities: (M, 2) non-negative raw intensities, rows summing > 0.
    targets: (M, 2) one-hot rows.
    """
    intensities = np.asarray(intensities, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    correct = np.argmax(targets, axis=1)
    value, _, _ = _ce_with_grad(intensities, correct)
    return value


def _ce_with_grad(intensities, correct_idx):
    """Cross entropy, per-sample terms, and the raw-intensity derivative."""
    intensities = np.asarray(intensities, dtype=np.float64)
    m = intensities.shape[0]
    if np.any(intensities < 0):
        raise DegenerateInputError("negative intensity")
    sums = intensities.sum(axis=1)
    if np.any(sums <= 0):
        raise DegenerateInputError("zero total intensity; no signal reached "
                                   "the output ports")
    p = intensities / sums[:, None]
    grads = np.zeros_like(intensities)
    terms = np.zeros(m)
    for n in range(m):
        c = int(correct_idx[n])
        o = 1 - c
        z = p[n, o] - p[n, c]
        terms[n] = float(np.logaddexp(0.0, z))
        s = 1.0 / (1.0 + np.exp(-z))          # dCE/dz
        # z = (I_o - I_c) / (I_o + I_c); quotient-rule pullback to raw I
        i_c, i_o = intensities[n, c], intensities[n, o]
        ssum = i_c + i_o
        dz_dc = (-(ssum) - (i_o - i_c)) / ssum ** 2
        dz_do = (ssum - (i_o - i_c)) / ssum ** 2
        grads[n, c] = s * dz_dc / m
        grads[n, o] = s * dz_do / m
    return float(terms.mean()), terms, grads


def mae_loss(predicted, target):
    """Mean absolute error between two equally windowed series."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ValueError("series shapes differ")
    if predicted.size == 0:
        raise ValueError("empty series")
    return float(np.mean(np.abs(target - predicted)))


def _mae_with_grad(predicted, target):
    value = mae_loss(predicted, target)
    grad = np.sign(predicted - target) / predicted.size
    return value, grad


def _nearest_bin(f, n, dt):
    freqs = np.fft.rfftfreq(n, d=dt)
    return int(np.argmin(np.abs(freqs - f)))


def spectral_gain(input_pair, output, f, dt, n_fft=SPECTRAL_WINDOW):
    """Output-to-input magnitude ratio at the bin nearest frequency f.

    Magnitudes are read from rFFTs of the trailing n_fft samples of each
    series; the denominator sums the two input magnitudes.
    """
    in1, in2 = (np.asarray(s, dtype=np.float64) for s in input_pair)
    output = np.asarray(output, dtype=np.float64)
    for s in (in1, in2, output):
        if len(s) < n_fft:
            raise ValueError(f"series shorter than the {n_fft}-sample window")
    b = _nearest_bin(f, n_fft, dt)
    mag = lambda s: float(np.abs(np.fft.rfft(s[-n_fft:])[b]))
    denom = mag(in1) + mag(in2)
    if denom <= 0:
        raise DegenerateInputError("zero input magnitude at the drive bin")
    return mag(output) / denom


def _gain_with_grad(input_pair, output, f, dt, n_fft=SPECTRAL_WINDOW):
    """Gain plus derivative with respect to the output series."""
    value = spectral_gain(input_pair, output, f, dt, n_fft)
    in1, in2 = (np.asarray(s, dtype=np.float64) for s in input_pair)
    output = np.asarray(output, dtype=np.float64)
    b = _nearest_bin(f, n_fft, dt)
    tail = output[-n_fft:]
    coeff = np.fft.rfft(tail)[b]
    re, im = coeff.real, coeff.imag
    mag_out = np.abs(coeff)
    theta = 2.0 * np.pi * b * np.arange(n_fft) / n_fft
    denom = sum(float(np.abs(np.fft.rfft(s[-n_fft:])[b])) for s in (in1, in2))
    grad = np.zeros_like(output)
    if mag_out > 0:
        grad[-n_fft:] = (re * np.cos(theta) - im * np.sin(theta)) / (
            mag_out * denom)
    return value, grad


def drive_series(drive: DriveSignal, n_steps, dt, stride=1):
    """Displacement series a kinematic drive imposes, at the recorded times."""
    t = recorded_times(n_steps, dt, stride)
    return drive.amplitude * np.sin(2.0 * np.pi * drive.frequency * t
                                    + drive.phase)


def _window_start(spec: ExperimentSpec, length):
    return int(spec.window_fraction * length)


def output_intensities(spec: ExperimentSpec, series):
    """Windowed per-probe intensities (sums of squared displacement) of one
    recorded series, in the probe order of the experiment."""
    series = np.asarray(series, dtype=np.float64)
    start = _window_start(spec, series.shape[0])
    return np.array([float(np.sum(series[start:, col] ** 2))
                     for col in range(series.shape[1])])


def sample_losses(spec: ExperimentSpec, samples, series_list, n_steps, dt,
                  stride=1):
    """Score recorded series for every sample of a dataset.

    series_list holds one (rows, n_probes) array per sample, column order
    matching spec.probes.  Returns (LossReport, seeds) where seeds[i] has
    the same shape as series_list[i] and holds dTotal/dseries.
    """
    partials = {}
    seeds = [np.zeros_like(s) for s in series_list]
    if spec.kind == "waveguide":
        start = _window_start(spec, series_list[0].shape[0])
        intensities = np.array([output_intensities(spec, s)
                                for s in series_list])
        correct = [sample.target_port for sample in samples]
        total, terms, igrads = _ce_with_grad(intensities, correct)
        for i, (sample, s) in enumerate(zip(samples, series_list)):
            partials[sample.label] = float(terms[i])
            for col in range(2):
                seeds[i][start:, col] = igrads[i, col] * 2.0 * s[start:, col]
        return LossReport(total=float(total), partials=partials), seeds

    if spec.loss == "mae_time":
        total = 0.0
        for i, (sample, s) in enumerate(zip(samples, series_list)):
            length = s.shape[0]
            start = _window_start(spec, length)
            value, grad = _mae_with_grad(s[start:, 0],
                                         sample.target_series[start:])
            partials[sample.label] = value
            seeds[i][start:, 0] = grad
            total += value
        return LossReport(total=float(total), partials=partials), seeds

    # spectral_gain: gain error against the gain of the target series
    return _spectral_losses(spec, samples, series_list, seeds, n_steps, dt,
                            stride)


def _spectral_losses(spec, samples, series_list, seeds, n_steps, dt, stride):
    partials = {}
    f = spec.frequencies[0]
    total = 0.0
    for i, (sample, s) in enumerate(zip(samples, series_list)):
        inputs = [drive_series(DriveSignal(p, spec.amplitude, f, spec.axis),
                               n_steps, dt, stride)
                  if any(d.particle == p for d in sample.drives)
                  else np.zeros(s.shape[0])
                  for p in spec.input_ports]
        gain, grad = _gain_with_grad(inputs, s[:, 0], f, dt)
        target_gain = spectral_gain(inputs, sample.target_series, f, dt)
        err = gain - target_gain
        partials[sample.label] = abs(err)
        seeds[i][:, 0] = np.sign(err) * grad
        total += abs(err)
    return LossReport(total=float(total), partials=partials), seeds


def simulate_samples(spec: ExperimentSpec, samples, params, geometry,
                     sim_config):
    """Run every sample's drive case; returns one series array per sample."""
    series_list = []
    for sample in samples:
        records = run_sim(sim_config, params, geometry,
                          drives=sample.drives, probes=spec.probes)
        series_list.append(np.column_stack([r.series for r in records]))
    return series_list


def evaluate_experiment(spec: ExperimentSpec, params, geometry, sim_config):
    """Forward-only loss of a design under an experiment."""
    samples = make_dataset(spec, sim_config.n_steps, sim_config.dt,
                           sim_config.record_stride)
    series_list = simulate_samples(spec, samples, params, geometry,
                                   sim_config)
    report, _ = sample_losses(spec, samples, series_list, sim_config.n_steps,
                              sim_config.dt, sim_config.record_stride)
    return report
