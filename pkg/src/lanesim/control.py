"""Steering laws: open-loop bang-bang, PID, and a small cloned neural policy.

All controllers consume the lane deflection signal (positive = lane veers
right) and emit a steering servo command in [0, 90] degrees, 45 = straight.
"""

import math
from dataclasses import dataclass, field

import numpy as np

SERVO_CENTER = 45.0
SERVO_MIN = 0.0
SERVO_MAX = 90.0


def _clamp_servo(value: float) -> float:
    return min(max(value, SERVO_MIN), SERVO_MAX)


def openloop_step(deflection: float, dead_band: float = 50.0) -> float:
    """Bang-bang steering: hard right above the dead band, hard left below."""
    if not math.isfinite(deflection):
        raise ValueError(f"non-finite deflection {deflection}")
    if deflection > dead_band:
        return SERVO_MAX
    if deflection < -dead_band:
        return SERVO_MIN
    return SERVO_CENTER


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.03
    ki: float = 0.002
    kd: float = 0.018
    integral_clamp: float = 2000.0

    def __post_init__(self):
        if self.integral_clamp <= 0:
            raise ValueError(f"integral_clamp must be > 0, got {self.integral_clamp}")


@dataclass(frozen=True)
class PidState:
    """Accumulated integral and previous error; fresh state before any step."""

    integral: float = 0.0
    prev_error: float = 0.0
    primed: bool = False


def pid_step(
    gains: PidGains, state: PidState, deflection: float, dt: float
) -> tuple[float, PidState]:
    """One PID update on the deflection error.

    The integral accumulates error*dt and is clamped symmetrically; the
    derivative uses the previous error and is zero on the first call.  Output
    is 45 + kp*e + ki*I + kd*dE, clamped to [0, 90].
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not math.isfinite(deflection):
        raise ValueError(f"non-finite deflection {deflection}")
    integral = state.integral + deflection * dt
    integral = min(max(integral, -gains.integral_clamp), gains.integral_clamp)
    derivative = (deflection - state.prev_error) / dt if state.primed else 0.0
    servo = _clamp_servo(
        SERVO_CENTER + gains.kp * deflection + gains.ki * integral + gains.kd * derivative
    )
    return servo, PidState(integral=integral, prev_error=deflection, primed=True)


def speed_law(deflection: float, v_floor: float, v_ceil: float) -> float:
    """Speed command easing from v_ceil on straights to v_floor at full deflection."""
    if not 0 <= v_floor <= v_ceil <= 1:
        raise ValueError(f"need 0 <= v_floor <= v_ceil <= 1, got {v_floor}, {v_ceil}")
    frac = min(abs(deflection), 1000.0) / 1000.0
    return v_ceil - (v_ceil - v_floor) * frac


# --------------------------------------------------------------------------
# Neural policy
# --------------------------------------------------------------------------

N_FEATURES = 3  # deflection/1000, previous deflection/1000, clamped integral/1000


@dataclass
class MlpPolicy:
    """One-hidden-layer tanh network mapping lane features to a servo angle.

    Output o in (-1, 1) becomes servo 45 + 45*o.  ``seed`` records the
    initialization stream for reproducibility.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        h = self.w1.shape[0]
        if self.w1.shape != (h, N_FEATURES) or self.b1.shape != (h,):
            raise ValueError(f"bad hidden layer shapes: w1 {self.w1.shape}, b1 {self.b1.shape}")
        if self.w2.shape != (1, h) or self.b2.shape != (1,):
            raise ValueError(f"bad output layer shapes: w2 {self.w2.shape}, b2 {self.b2.shape}")

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        return (N_FEATURES, self.hidden, 1)

    def copy(self) -> "MlpPolicy":
        return MlpPolicy(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.seed
        )


def init_policy(hidden: int = 16, seed: int = 0) -> MlpPolicy:
    """Uniform +/-1/sqrt(fan_in) initialization from a seeded stream."""
    if hidden < 1:
        raise ValueError(f"hidden width must be >= 1, got {hidden}")
    rng = np.random.default_rng(seed)
    lim1 = 1.0 / math.sqrt(N_FEATURES)
    lim2 = 1.0 / math.sqrt(hidden)
    return MlpPolicy(
        w1=rng.uniform(-lim1, lim1, size=(hidden, N_FEATURES)),
        b1=rng.uniform(-lim1, lim1, size=hidden),
        w2=rng.uniform(-lim2, lim2, size=(1, hidden)),
        b2=rng.uniform(-lim2, lim2, size=1),
        seed=seed,
    )


def _forward_batch(policy: MlpPolicy, feats: np.ndarray):
    z1 = feats @ policy.w1.T + policy.b1
    a1 = np.tanh(z1)
    z2 = a1 @ policy.w2.T + policy.b2
    o = np.tanh(z2)
    servo = SERVO_CENTER + 45.0 * o[:, 0]
    return servo, a1, o


def mlp_forward(policy: MlpPolicy, features) -> float:
    """Servo command for one feature triple."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape != (N_FEATURES,):
        raise ValueError(f"features must have shape ({N_FEATURES},), got {f.shape}")
    if not np.isfinite(f).all():
        raise ValueError("features contain non-finite values")
    servo, _, _ = _forward_batch(policy, f[None, :])
    return float(servo[0])


def loss_and_grads(policy: MlpPolicy, feats: np.ndarray, targets: np.ndarray):
    """Mean-squared servo error and its gradients w.r.t. every parameter."""
    n = len(targets)
    servo, a1, o = _forward_batch(policy, feats)
    resid = servo - targets
    loss = float((resid**2).mean())
    # d loss / d z2, through servo = 45 + 45*tanh(z2)
    dz2 = (2.0 / n) * resid[:, None] * 45.0 * (1.0 - o**2)
    gw2 = dz2.T @ a1
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ policy.w2
    dz1 = da1 * (1.0 - a1**2)
    gw1 = dz1.T @ feats
    gb1 = dz1.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 16
    learning_rate: float = 1e-4
    epochs: int = 250
    batch_size: int = 64
    seed: int = 0
    holdout_fraction: float = 0.2


@dataclass(frozen=True, eq=False)
class Demonstration:
    """Cloning dataset: feature rows, expert servo labels, collection metadata."""

    features: np.ndarray
    servo: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        s = np.asarray(self.servo, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != N_FEATURES or s.shape != (f.shape[0],):
            raise ValueError(f"bad dataset shapes: features {f.shape}, servo {s.shape}")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "servo", s)

    def __len__(self) -> int:
        return len(self.servo)


def mlp_train_clone(data: Demonstration, config: TrainConfig) -> tuple[MlpPolicy, float]:
    """Behavioral cloning by mini-batch gradient descent on servo MSE.

    A seeded permutation reserves a holdout slice (default 20%); the returned
    policy is the epoch with the best holdout RMSE, along with that RMSE.
    Non-finite loss aborts with RuntimeError.
    """
    if len(data) < 5:
        raise ValueError(f"need at least 5 samples to split and train, got {len(data)}")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(data))
    n_val = max(1, int(round(len(data) * config.holdout_fraction)))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if len(train_idx) == 0:
        raise ValueError("holdout fraction leaves no training data")
    x_train, y_train = data.features[train_idx], data.servo[train_idx]
    x_val, y_val = data.features[val_idx], data.servo[val_idx]

    policy = init_policy(config.hidden, config.seed)
    best = policy.copy()
    best_rmse = _rmse(policy, x_val, y_val)
    lr = config.learning_rate
    for epoch in range(config.epochs):
        order = rng.permutation(len(y_train))
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            loss, grads = loss_and_grads(policy, x_train[batch], y_train[batch])
            if not math.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}: loss {loss}")
            policy.w1 -= lr * grads["w1"]
            policy.b1 -= lr * grads["b1"]
            policy.w2 -= lr * grads["w2"]
            policy.b2 -= lr * grads["b2"]
        rmse = _rmse(policy, x_val, y_val)
        if not math.isfinite(rmse):
            raise RuntimeError(f"training diverged at epoch {epoch}: holdout rmse {rmse}")
        if rmse < best_rmse:
            best_rmse = rmse
            best = policy.copy()
    return best, best_rmse


def _rmse(policy: MlpPolicy, feats: np.ndarray, targets: np.ndarray) -> float:
    servo, _, _ = _forward_batch(policy, feats)
    return float(np.sqrt(((servo - targets) ** 2).mean()))


def save_policy(policy: MlpPolicy) -> str:
    """Text form: ``mlp <n_layers> <sizes...> <seed>`` then one weight per line.

    Weights are layer-major, each matrix row-major, biases after their matrix.
    """
    sizes = policy.layer_sizes
    lines = [f"mlp {len(sizes)} {' '.join(str(s) for s in sizes)} {policy.seed}"]
    for arr in (policy.w1, policy.b1, policy.w2, policy.b2):
        lines.extend(repr(float(x)) for x in arr.ravel())
    return "\n".join(lines) + "\n"


def load_policy(text: str) -> MlpPolicy:
    tokens = text.split()
    if not tokens or tokens[0] != "mlp":
        raise ValueError("policy text must start with 'mlp'")
    try:
        n_layers = int(tokens[1])
        sizes = [int(t) for t in tokens[2 : 2 + n_layers]]
        seed = int(tokens[2 + n_layers])
        values = [float(t) for t in tokens[3 + n_layers :]]
    except (IndexError, ValueError):
        raise ValueError("malformed policy header or weight list") from None
    if n_layers != 3 or sizes[0] != N_FEATURES or sizes[2] != 1:
        raise ValueError(f"unsupported layer layout {sizes}")
    hidden = sizes[1]
    counts = [hidden * N_FEATURES, hidden, hidden, 1]
    if len(values) != sum(counts):
        raise ValueError(f"expected {sum(counts)} weights, got {len(values)}")
    arr = np.array(values, dtype=np.float64)
    ofs = np.cumsum([0] + counts)
    return MlpPolicy(
        w1=arr[ofs[0] : ofs[1]].reshape(hidden, N_FEATURES),
        b1=arr[ofs[1] : ofs[2]],
        w2=arr[ofs[2] : ofs[3]].reshape(1, hidden),
        b2=arr[ofs[3] : ofs[4]],
        seed=seed,
    )
