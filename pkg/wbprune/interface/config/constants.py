"""
Configuration and Constants for wbprune
"""

import os

# Environment variables
DATA_DIR_ENV = "WHITEBOX_DATA_DIR"
DEBUG_ENV = "WHITEBOX_DEBUG"

# Data Directory Configuration
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
DATA_DIR = os.path.join(PROJECT_ROOT, "data")
ARCH_DIR = os.path.join(DATA_DIR, "arch")
CONFIG_DIR = os.path.join(DATA_DIR, "configs")
RESNET50_ARCH_FILE = os.path.join(ARCH_DIR, "resnet50.arch")

# Run directory layout
CHECKPOINT_DIR = "checkpoints"
MASKS_DIR = "masks"
REPORTS_DIR = "reports"
CHECKPOINT_FILE = "model.wbp"
GRAPH_FILE = "graph.json"
PLAN_FILE = "plan.json"
REPORT_FILE = "report.json"
CONFIG_SNAPSHOT_FILE = "config.json"
CURVES_CSV = "curves.csv"
LAYER_RATES_CSV = "layer_rates.csv"
SUMMARY_FILE = "summary.txt"

# Pipeline phases, in run order
PHASE_BUILD = "build"
PHASE_MASK = "masked"
PHASE_VOTE = "vote"
PHASE_PRUNED = "pruned"
PHASE_FINETUNED = "finetuned"
PHASE_EVAL = "eval"
CHECKPOINT_PHASES = [PHASE_MASK, PHASE_PRUNED, PHASE_FINETUNED]

# Checkpoint binary format
CHECKPOINT_MAGIC = b"WBPRUNE1"
MASK_PREFIX = "mask."

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_DATA_ERROR = 2
EXIT_TRAINING_FAILURE = 3

# CIFAR-10 binary layout
CIFAR_IMAGE_SHAPE = (3, 32, 32)
CIFAR_RECORD_BYTES = 1 + 3 * 32 * 32
CIFAR_NUM_CLASSES = 10
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILES = ["test_batch.bin"]

# Training defaults (CIFAR recipe)
DEFAULT_LR = 0.1
DEFAULT_MOMENTUM = 0.9
DEFAULT_WEIGHT_DECAY = 5e-4
DEFAULT_BATCH_SIZE = 256
DEFAULT_LAMBDA = 1e-2
DEFAULT_MU = 0.5
DEFAULT_SIGMA = 1.0
DEFAULT_LR_DECAY = 0.1
DEFAULT_FINETUNE_EPOCHS = 300
DEFAULT_MILESTONE_FRACTIONS = (0.5, 0.75)
MASK_EPOCH_FRACTION = 0.1
BATCHNORM_MOMENTUM = 0.1
BATCHNORM_EPS = 1e-5

# Augmentation defaults
DEFAULT_PAD_CROP = 4
DEFAULT_HFLIP_PROB = 0.5

# Channel score kinds
SCORE_KINDS = {
    "abs_sum": "Sum of absolute class-wise mask values",
    "signed_sum": "Signed sum of class-wise mask values",
    "l2_norm": "Euclidean norm of the class-wise mask column",
}

# Pruning methods
METHODS = {
    "whitebox": "Class-wise mask scores",
    "random": "Random channel scores (baseline)",
    "l1": "Filter weight l1-norm scores (baseline)",
}

# Sparsity penalties
NORM_KINDS = {
    "l2_group": "Group l2 norm of each mask column",
    "l1": "Elementwise l1 norm (ablation)",
}

# Architectures the harness can build
ARCHITECTURES = {
    "toycnn": "conv-bn-relu blocks, maxpool every second block, global pool head",
    "vgg16": "13-conv VGG backbone for 32x32 inputs",
}

VGG16_CFG = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M"]

# Dtypes
DTYPES = {
    "float32": "single precision (training)",
    "float64": "double precision (gradient checks)",
}

# Logging
LOG_FORMAT = "%(asctime)s level=%(levelname)s logger=%(name)s %(message)s"
