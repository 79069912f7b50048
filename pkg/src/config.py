# Global Configuration

# Smoothing / certification
DEFAULT_SIGMA = 0.5
DEFAULT_N0 = 100
DEFAULT_N = 100000
DEFAULT_ALPHA = 0.001
DEFAULT_EPSILON = 0.5
DEFAULT_EPSILON_GRID = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
DEFAULT_SAMPLE_BATCH = 10000

# Φ⁻¹ 的截断：精确路径用 1e-12，训练时的 soft 概率噪声较大，用 1e-4
CERT_CLAMP_EPS = 1e-12
SOFT_CLAMP_EPS = 1e-4

# Training
DEFAULT_OBJECTIVE = "cs-macer"
DEFAULT_LAMBDA = 1.0
DEFAULT_GAMMA1 = 4.0
DEFAULT_GAMMA2 = 16.0
DEFAULT_MACER_GAMMA = 8.0
DEFAULT_ALPHA_W = 1.2
DEFAULT_K_SAMPLES = 16
DEFAULT_BETA = 16.0
DEFAULT_LR = 0.01
DEFAULT_EPOCHS = 200
DEFAULT_BATCH_SIZE = 64
DEFAULT_HIDDEN = 32
DEFAULT_SEED = 0

# Synthetic benchmark ("blobs-5", class 3 plays the role of the sensitive seed class)
DEFAULT_SYNTHETIC = "blobs-5"
DEFAULT_SENSITIVE_CLASS = 3
SYNTHETIC_TRAIN_SIZE = 500
SYNTHETIC_TEST_SIZE = 500

MODEL_FORMAT_VERSION = 1
THREADS_ENV = "CS_SMOOTH_THREADS"
