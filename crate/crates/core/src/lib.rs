//! Monitoring core for grid sites: configuration objects, check plugins,
//! the SOFT/HARD state machine with host reachability, scheduling,
//! notifications, metric history, retention and external commands.

pub mod command;
pub mod config;
pub mod monitor;
pub mod notifier;
pub mod num;
pub mod plugin;
pub mod retention;
pub mod rollup;
pub mod scheduler;
pub mod state;
pub mod status;
pub mod time;
pub mod timeseries;
pub mod topology;

pub use command::{parse_external_command, CommandKind, CommandParseError, ExternalCommand, Verb};
pub use config::{load_paths, load_str, ConfigError, MetricKind, Model};
pub use monitor::{
    plan_check, CheckPlan, CommandError, DispatchRecord, Executor, Monitor, MonitorError,
    MonitorOptions, PluginExecutor, VirtualRunner,
};
pub use notifier::{NotificationLog, NotificationRecord, Transport, TransportResult};
pub use num::Scalar;
pub use plugin::{eval_range, CheckOutput, PerfDatum};
pub use retention::{read_retention, write_retention, RetentionError, RetentionSnapshot};
pub use rollup::{DotColor, SiteRollup};
pub use scheduler::{CheckKind, ScheduledCheck, SchedulerPolicy};
pub use state::{
    Downtime, EngineEvent, HostPolicy, HostState, MonitorState, NotificationReason, ServiceState,
    StateType,
};
pub use status::{CheckResult, HostReachability, Origin, StatusCode, Target};
pub use time::{Clock, ManualClock, ScaledClock, SystemClock, Timestamp};
pub use timeseries::{ArchiveSpec, Consolidation, SeriesKey, SeriesStore};
pub use topology::{classify_host, Topology};

/// Threshold range over `f64` samples.
pub type Range = plugin::ThresholdRange<f64>;
/// Metric history over `f64` samples.
pub type SeriesDB = timeseries::SeriesDb<f64>;
