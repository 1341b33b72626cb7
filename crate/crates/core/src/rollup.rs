//! Per-site worst-status rollups for the map view.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{MetricKind, Model, ServiceDef};
use crate::state::{Downtime, ServiceState, StateType};
use crate::status::{StatusCode, Target};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RollupError {
    #[error("unknown site {0:?}")]
    UnknownSite(String),
    #[error("unknown VO {0:?}")]
    UnknownVo(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DotColor {
    Green,
    Yellow,
    Red,
    Gray,
}

pub fn dot_color(status: StatusCode) -> DotColor {
    match status {
        StatusCode::Ok => DotColor::Green,
        StatusCode::Warning => DotColor::Yellow,
        StatusCode::Critical => DotColor::Red,
        StatusCode::Unknown => DotColor::Gray,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    #[serde(rename = "OK")]
    pub ok: usize,
    #[serde(rename = "WARNING")]
    pub warning: usize,
    #[serde(rename = "UNKNOWN")]
    pub unknown: usize,
    #[serde(rename = "CRITICAL")]
    pub critical: usize,
}

impl StatusCounts {
    pub fn add(&mut self, s: StatusCode) {
        match s {
            StatusCode::Ok => self.ok += 1,
            StatusCode::Warning => self.warning += 1,
            StatusCode::Unknown => self.unknown += 1,
            StatusCode::Critical => self.critical += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.ok + self.warning + self.unknown + self.critical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRollup {
    pub site_name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub vos: Vec<String>,
    pub worst_status: StatusCode,
    pub dot_color: DotColor,
    pub counts: StatusCounts,
    pub any_acknowledged: bool,
    pub any_downtime: bool,
}

/// The operator-facing status: SOFT states count at their last HARD value.
pub fn hard_status(state: &ServiceState) -> StatusCode {
    match state.state_type {
        StateType::Hard => state.current_status,
        StateType::Soft => state.last_hard_status,
    }
}

/// Worst status over `statuses`; `None` when empty.
pub fn worst_of(statuses: impl IntoIterator<Item = StatusCode>) -> Option<StatusCode> {
    statuses.into_iter().max()
}

fn in_downtime(target: &Target, downtimes: &[Downtime], now: Timestamp) -> bool {
    let host = Target::host(target.host_name());
    downtimes
        .iter()
        .any(|d| d.is_active(now) && (d.target == *target || d.target == host))
}

/// Services selected by the site, VO and metric filters.
pub fn select_services<'a>(
    model: &'a Model,
    site: &'a str,
    vo: Option<&'a str>,
    metric: Option<MetricKind>,
) -> Result<Vec<&'a ServiceDef>, RollupError> {
    if !model.sites.contains_key(site) {
        return Err(RollupError::UnknownSite(site.to_string()));
    }
    if let Some(v) = vo {
        if !model.vos.contains_key(v) {
            return Err(RollupError::UnknownVo(v.to_string()));
        }
    }
    Ok(model
        .hosts_in_site(site)
        .flat_map(|h| model.services_on(&h.host_name))
        .filter(|s| vo.is_none_or(|v| s.vos.iter().any(|x| x == v)))
        .filter(|s| metric.is_none_or(|m| s.metric_kind == m))
        .collect())
}

pub fn site_rollup(
    model: &Model,
    states: &BTreeMap<Target, ServiceState>,
    downtimes: &[Downtime],
    site: &str,
    vo: Option<&str>,
    metric: Option<MetricKind>,
    now: Timestamp,
) -> Result<SiteRollup, RollupError> {
    let selected = select_services(model, site, vo, metric)?;
    let def = &model.sites[site];
    let mut counts = StatusCounts::default();
    let mut any_acknowledged = false;
    let mut any_downtime = false;
    let mut statuses = Vec::with_capacity(selected.len());
    for s in &selected {
        let target = s.target();
        let state = states.get(&target);
        let status = state.map_or(StatusCode::Ok, hard_status);
        counts.add(status);
        statuses.push(status);
        any_acknowledged |= state.is_some_and(|st| st.acknowledged);
        any_downtime |= in_downtime(&target, downtimes, now);
    }
    let worst = worst_of(statuses).unwrap_or(StatusCode::Unknown);
    Ok(SiteRollup {
        site_name: def.site_name.clone(),
        latitude: def.latitude,
        longitude: def.longitude,
        vos: def.vos.clone(),
        worst_status: worst,
        dot_color: dot_color(worst),
        counts,
        any_acknowledged,
        any_downtime,
    })
}

/// Rollups for every configured site, in configuration order.
pub fn map_rollups(
    model: &Model,
    states: &BTreeMap<Target, ServiceState>,
    downtimes: &[Downtime],
    vo: Option<&str>,
    metric: Option<MetricKind>,
    now: Timestamp,
) -> Result<Vec<SiteRollup>, RollupError> {
    model
        .sites
        .keys()
        .map(|site| site_rollup(model, states, downtimes, site, vo, metric, now))
        .collect()
}
