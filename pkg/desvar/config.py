# Shipped model and experiment files, relative to the package. DESVAR_DATA_DIR may
# point elsewhere.
PACKAGE_DATA = "data"

# Every model keeps its clock in minutes
MINUTES_PER_HOUR = 60.0
MINUTES_PER_DAY = 1440.0

# Experimental conditions shared by the three benchmark models
DEFAULT_REPLICATIONS = 10
DEFAULT_ALPHA = 0.05
DEFAULT_WARM_UP = 0.0
BENCHMARK_MONTH_MINUTES = 30 * MINUTES_PER_DAY

# Pinned when a model file sets strict_paper
MANUFACTURING_ARRIVAL_MEAN = 13.0
MANUFACTURING_CELLS = 4
MANUFACTURING_PART_TYPES = 3
CELL3_NEW_MACHINE_MULTIPLIER = 0.8
CALL_CENTER_TRUNKS = 26
CALL_CENTER_HORIZON = 660.0
CROSSDOCK_DISPENSERS = 2
CROSSDOCK_PICKER_GROUPS = 2

# Guard against models that never finish draining
DEFAULT_MAX_EVENTS = 20_000_000

DEFAULT_BASE_SEED = 20100607

# Stamped into every manifest. Changing the uniform construction means
# changing this string.
GENERATOR_ID = "numpy.PCG64DXSM;seedseq-blake2b32;u=Generator.random;open(0,1)"

# Output files of `desvar run`
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
REPLICATIONS_CSV = "replications.csv"
MANIFEST_DIRECTORY = "manifests"
# Sorts by group then replication
MANIFEST_FILE = "{group}-{replication:03d}.seeds"
