//! JSON shapes served by the API, built from immutable snapshots.

use std::collections::BTreeMap;
use std::sync::Arc;

use gridwatch_core::config::MetricKind;
use gridwatch_core::rollup::{map_rollups, site_rollup, RollupError, SiteRollup};
use gridwatch_core::state::{Downtime, HostState, ServiceState, StateType};
use gridwatch_core::timeseries::SeriesStore;
use gridwatch_core::{HostReachability, Model, Monitor, NotificationRecord, StatusCode, Target, Timestamp};
use serde::Serialize;

fn iso(t: Option<Timestamp>) -> Option<String> {
    t.map(Timestamp::to_iso8601)
}

/// Everything the read endpoints need, frozen at `generated_at`.
#[derive(Debug, Clone)]
pub struct StatusSnapshot {
    pub generated_at: Timestamp,
    pub model: Arc<Model>,
    pub hosts: BTreeMap<String, HostState>,
    pub services: BTreeMap<Target, ServiceState>,
    pub downtimes: Vec<Downtime>,
    pub notifications_enabled: bool,
    pub notifications: Vec<NotificationRecord>,
    pub series: SeriesStore<f64>,
}

impl StatusSnapshot {
    pub fn capture(monitor: &Monitor, now: Timestamp) -> Self {
        StatusSnapshot {
            generated_at: now,
            model: monitor.model().clone(),
            hosts: monitor.hosts().clone(),
            services: monitor.services().clone(),
            downtimes: monitor.downtimes().to_vec(),
            notifications_enabled: monitor.notifications_enabled(),
            notifications: monitor.history().iter().cloned().collect(),
            series: monitor.series().clone(),
        }
    }

    fn in_downtime(&self, target: &Target) -> bool {
        let host = Target::host(target.host_name());
        self.downtimes
            .iter()
            .any(|d| d.is_active(self.generated_at) && (d.target == *target || d.target == host))
    }

    pub fn host_view(&self, name: &str) -> Option<HostView> {
        let def = self.model.hosts.get(name)?;
        let st = self.hosts.get(name)?;
        Some(HostView {
            host_name: def.host_name.clone(),
            alias: def.alias.clone(),
            address: def.address.clone(),
            site: def.site.clone(),
            parents: def.parents.clone(),
            status: st.current_status,
            last_hard_status: st.last_hard_status,
            state_type: st.state_type,
            attempt: st.attempt,
            max_check_attempts: def.max_attempts,
            last_check: iso(st.last_check),
            last_state_change: iso(st.last_state_change),
            acknowledged: st.acknowledged,
            in_downtime: self.in_downtime(&st.target),
            notification_number: st.notification_number,
            output: st.last_output.clone(),
        })
    }

    pub fn service_view(&self, target: &Target) -> Option<ServiceView> {
        let def = self.model.service(target.host_name(), target.service_name()?)?;
        let st = self.services.get(target)?;
        Some(ServiceView {
            host_name: def.host_name.clone(),
            service_description: def.description.clone(),
            status: st.current_status,
            last_hard_status: st.last_hard_status,
            state_type: st.state_type,
            attempt: st.attempt,
            max_check_attempts: def.max_attempts,
            last_check: iso(st.last_check),
            last_state_change: iso(st.last_state_change),
            acknowledged: st.acknowledged,
            in_downtime: self.in_downtime(target),
            notification_number: st.notification_number,
            output: st.last_output.clone(),
            vos: def.vos.clone(),
            metric_kind: def.metric_kind,
        })
    }

    pub fn hosts(&self) -> Vec<HostView> {
        self.model.hosts.keys().filter_map(|h| self.host_view(h)).collect()
    }

    pub fn services(&self) -> Vec<ServiceView> {
        self.model.services.values().filter_map(|s| self.service_view(&s.target())).collect()
    }

    pub fn map(&self, vo: Option<&str>, metric: Option<MetricKind>) -> Result<Vec<SiteRollup>, RollupError> {
        map_rollups(&self.model, &self.services, &self.downtimes, vo, metric, self.generated_at)
    }

    pub fn site(&self, name: &str, vo: Option<&str>, metric: Option<MetricKind>) -> Result<SiteDetail, RollupError> {
        let rollup = site_rollup(&self.model, &self.services, &self.downtimes, name, vo, metric, self.generated_at)?;
        let hosts: Vec<HostView> = self.model.hosts_in_site(name).filter_map(|h| self.host_view(&h.host_name)).collect();
        let services = gridwatch_core::rollup::select_services(&self.model, name, vo, metric)?
            .into_iter()
            .filter_map(|s| self.service_view(&s.target()))
            .collect();
        Ok(SiteDetail { rollup, hosts, services })
    }

    pub fn notifications(&self, limit: usize) -> Vec<NotificationView> {
        let skip = self.notifications.len().saturating_sub(limit);
        self.notifications[skip..]
            .iter()
            .map(|n| NotificationView {
                sent_at: n.sent_at.to_iso8601(),
                host_name: n.target.host_name().to_string(),
                service_description: n.target.service_name().map(str::to_string),
                reason: n.reason.as_str(),
                notification_number: n.notification_number,
                contacts: n.contacts.clone(),
                transport_result: n.transport_result.to_string(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HostView {
    pub host_name: String,
    pub alias: Option<String>,
    pub address: String,
    pub site: Option<String>,
    pub parents: Vec<String>,
    pub status: HostReachability,
    pub last_hard_status: HostReachability,
    pub state_type: StateType,
    pub attempt: u32,
    pub max_check_attempts: u32,
    pub last_check: Option<String>,
    pub last_state_change: Option<String>,
    pub acknowledged: bool,
    pub in_downtime: bool,
    pub notification_number: u32,
    pub output: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ServiceView {
    pub host_name: String,
    pub service_description: String,
    pub status: StatusCode,
    pub last_hard_status: StatusCode,
    pub state_type: StateType,
    pub attempt: u32,
    pub max_check_attempts: u32,
    pub last_check: Option<String>,
    pub last_state_change: Option<String>,
    pub acknowledged: bool,
    pub in_downtime: bool,
    pub notification_number: u32,
    pub output: String,
    pub vos: Vec<String>,
    pub metric_kind: MetricKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct SiteDetail {
    #[serde(flatten)]
    pub rollup: SiteRollup,
    pub hosts: Vec<HostView>,
    pub services: Vec<ServiceView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NotificationView {
    pub sent_at: String,
    pub host_name: String,
    pub service_description: Option<String>,
    pub reason: &'static str,
    pub notification_number: u32,
    pub contacts: Vec<String>,
    pub transport_result: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryPoint {
    /// Row end, Unix seconds.
    pub t: i64,
    /// `null` marks a gap.
    pub v: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryView {
    pub host_name: String,
    pub service_description: String,
    pub label: String,
    pub start: i64,
    pub end: i64,
    pub points: Vec<HistoryPoint>,
}
