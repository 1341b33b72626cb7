use std::collections::HashSet;

use indexmap::IndexMap;
use thiserror::Error;

use super::*;
use crate::plugin::is_builtin_check;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("reference to undefined {kind} {name:?}")]
    DanglingReference { kind: ObjectKind, name: String },
    #[error("host parent cycle: {}", .0.join(" -> "))]
    ParentCycle(Vec<String>),
    #[error("{kind} is missing required attribute {attr:?}")]
    MissingRequiredAttribute { kind: ObjectKind, attr: String },
    #[error("{location}: {kind} has unknown attribute {attr:?}")]
    UnknownAttribute {
        kind: ObjectKind,
        attr: String,
        location: SourceLocation,
    },
    #[error("duplicate {kind} {name:?}")]
    DuplicateObject { kind: ObjectKind, name: String },
    #[error("{kind} attribute {attr} = {value:?}: {reason}")]
    InvalidValue {
        kind: ObjectKind,
        attr: String,
        value: String,
        reason: String,
    },
}

fn allowed(kind: ObjectKind) -> &'static [&'static str] {
    match kind {
        ObjectKind::Host => &[
            "host_name",
            "alias",
            "address",
            "parents",
            "site",
            "check_command",
            "check_interval",
            "retry_interval",
            "max_check_attempts",
            "notifications_enabled",
            "contact_groups",
            "notification_interval",
            "event_handler",
        ],
        ObjectKind::Service => &[
            "host_name",
            "service_description",
            "check_command",
            "check_interval",
            "retry_interval",
            "max_check_attempts",
            "contact_groups",
            "vos",
            "metric_kind",
            "notifications_enabled",
            "notification_interval",
            "event_handler",
        ],
        ObjectKind::Command => &["command_name", "command_line"],
        ObjectKind::Contact => &["contact_name", "alias", "notify_command", "enabled"],
        ObjectKind::ContactGroup => &["contactgroup_name", "alias", "members"],
        ObjectKind::Escalation => &[
            "host_name",
            "service_description",
            "first_notification",
            "last_notification",
            "contact_groups",
            "notification_interval",
        ],
        ObjectKind::Site => &["site_name", "alias", "latitude", "longitude", "vos"],
        ObjectKind::Vo => &["vo_name", "alias"],
    }
}

struct Attrs<'a> {
    block: &'a ObjectBlock,
}

impl<'a> Attrs<'a> {
    fn kind(&self) -> ObjectKind {
        self.block.kind
    }

    fn opt(&self, attr: &str) -> Option<&'a str> {
        self.block.get(attr).filter(|v| !v.is_empty())
    }

    fn req(&self, attr: &str) -> Result<&'a str, ValidationError> {
        self.opt(attr)
            .ok_or_else(|| ValidationError::MissingRequiredAttribute {
                kind: self.kind(),
                attr: attr.to_string(),
            })
    }

    fn list(&self, attr: &str) -> Vec<String> {
        self.opt(attr)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn invalid(&self, attr: &str, value: &str, reason: &str) -> ValidationError {
        ValidationError::InvalidValue {
            kind: self.kind(),
            attr: attr.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        }
    }

    fn num<T: std::str::FromStr>(&self, attr: &str, default: T) -> Result<T, ValidationError> {
        match self.opt(attr) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.invalid(attr, v, "not a number")),
        }
    }

    fn positive(&self, attr: &str, default: u64) -> Result<u64, ValidationError> {
        let v = self.num(attr, default)?;
        if v == 0 {
            return Err(self.invalid(attr, "0", "must be > 0"));
        }
        Ok(v)
    }

    fn flag(&self, attr: &str, default: bool) -> Result<bool, ValidationError> {
        match self.opt(attr) {
            None => Ok(default),
            Some("1") => Ok(true),
            Some("0") => Ok(false),
            Some(v) => Err(self.invalid(attr, v, "expected 0 or 1")),
        }
    }

    fn max_attempts(&self) -> Result<u32, ValidationError> {
        let v: u32 = self.num("max_check_attempts", DEFAULT_MAX_ATTEMPTS)?;
        if v == 0 {
            return Err(self.invalid("max_check_attempts", "0", "must be >= 1"));
        }
        Ok(v)
    }
}

/// Turns parsed blocks into a [`Model`]: typed fields, defaults, resolved
/// references and an acyclic host-parent graph.
pub fn link_and_validate(blocks: &[ObjectBlock]) -> Result<Model, ValidationError> {
    for b in blocks {
        let ok = allowed(b.kind);
        if let Some(attr) = b.attributes.keys().find(|a| !ok.contains(&a.as_str())) {
            return Err(ValidationError::UnknownAttribute {
                kind: b.kind,
                attr: attr.clone(),
                location: b.location.clone(),
            });
        }
    }

    let mut model = Model::default();
    for b in blocks {
        let a = Attrs { block: b };
        match b.kind {
            ObjectKind::Host => {
                let def = build_host(&a)?;
                insert_unique(&mut model.hosts, def.host_name.clone(), def, b.kind)?;
            }
            ObjectKind::Service => {
                let def = build_service(&a)?;
                let key = (def.host_name.clone(), def.description.clone());
                if model.services.contains_key(&key) {
                    return Err(ValidationError::DuplicateObject {
                        kind: b.kind,
                        name: format!("{}/{}", key.0, key.1),
                    });
                }
                model.services.insert(key, def);
            }
            ObjectKind::Command => {
                let def = CommandDef {
                    name: a.req("command_name")?.to_string(),
                    command_line: a.req("command_line")?.to_string(),
                };
                insert_unique(&mut model.commands, def.name.clone(), def, b.kind)?;
            }
            ObjectKind::Contact => {
                let def = ContactDef {
                    name: a.req("contact_name")?.to_string(),
                    alias: a.opt("alias").map(str::to_string),
                    notify_command: a.opt("notify_command").map(CommandRef::parse),
                    enabled: a.flag("enabled", true)?,
                };
                insert_unique(&mut model.contacts, def.name.clone(), def, b.kind)?;
            }
            ObjectKind::ContactGroup => {
                let def = ContactGroupDef {
                    name: a.req("contactgroup_name")?.to_string(),
                    alias: a.opt("alias").map(str::to_string),
                    members: a.list("members"),
                };
                insert_unique(&mut model.contact_groups, def.name.clone(), def, b.kind)?;
            }
            ObjectKind::Escalation => model.escalations.push(build_escalation(&a)?),
            ObjectKind::Site => {
                let def = build_site(&a)?;
                insert_unique(&mut model.sites, def.site_name.clone(), def, b.kind)?;
            }
            ObjectKind::Vo => {
                let def = VoDef {
                    vo_name: a.req("vo_name")?.to_string(),
                    alias: a.opt("alias").map(str::to_string),
                };
                insert_unique(&mut model.vos, def.vo_name.clone(), def, b.kind)?;
            }
        }
    }

    resolve_references(&model)?;
    if let Some(cycle) = find_parent_cycle(&model.hosts) {
        return Err(ValidationError::ParentCycle(cycle));
    }
    Ok(model)
}

fn insert_unique<T>(
    map: &mut IndexMap<String, T>,
    name: String,
    value: T,
    kind: ObjectKind,
) -> Result<(), ValidationError> {
    if map.contains_key(&name) {
        return Err(ValidationError::DuplicateObject { kind, name });
    }
    map.insert(name, value);
    Ok(())
}

fn check_intervals(a: &Attrs) -> Result<(u64, u64), ValidationError> {
    let check = a.positive("check_interval", DEFAULT_CHECK_INTERVAL_S)?;
    let retry = a.positive("retry_interval", DEFAULT_RETRY_INTERVAL_S.min(check))?;
    if retry > check {
        return Err(a.invalid(
            "retry_interval",
            &retry.to_string(),
            "must not exceed check_interval",
        ));
    }
    Ok((check, retry))
}

fn build_host(a: &Attrs) -> Result<HostDef, ValidationError> {
    let (check_interval_s, retry_interval_s) = check_intervals(a)?;
    Ok(HostDef {
        host_name: a.req("host_name")?.to_string(),
        alias: a.opt("alias").map(str::to_string),
        address: a.req("address")?.to_string(),
        parents: a.list("parents"),
        site: a.opt("site").map(str::to_string),
        check_command: a.opt("check_command").map(CommandRef::parse),
        check_interval_s,
        retry_interval_s,
        max_attempts: a.max_attempts()?,
        notify: a.flag("notifications_enabled", true)?,
        contact_groups: a.list("contact_groups"),
        notification_interval_s: a.num("notification_interval", DEFAULT_NOTIFICATION_INTERVAL_S)?,
        event_handler: a.opt("event_handler").map(CommandRef::parse),
    })
}

fn build_service(a: &Attrs) -> Result<ServiceDef, ValidationError> {
    let (check_interval_s, retry_interval_s) = check_intervals(a)?;
    let metric_kind = match a.opt("metric_kind") {
        None => MetricKind::Other,
        Some(v) => v
            .parse()
            .map_err(|_| a.invalid("metric_kind", v, "unknown metric kind"))?,
    };
    Ok(ServiceDef {
        host_name: a.req("host_name")?.to_string(),
        description: a.req("service_description")?.to_string(),
        check_command: CommandRef::parse(a.req("check_command")?),
        check_interval_s,
        retry_interval_s,
        max_attempts: a.max_attempts()?,
        contact_groups: a.list("contact_groups"),
        vos: a.list("vos"),
        metric_kind,
        notify: a.flag("notifications_enabled", true)?,
        notification_interval_s: a.num("notification_interval", DEFAULT_NOTIFICATION_INTERVAL_S)?,
        event_handler: a.opt("event_handler").map(CommandRef::parse),
    })
}

fn build_escalation(a: &Attrs) -> Result<EscalationDef, ValidationError> {
    let first: u32 = match a.opt("first_notification") {
        Some(_) => a.num("first_notification", 1)?,
        None => {
            return Err(ValidationError::MissingRequiredAttribute {
                kind: ObjectKind::Escalation,
                attr: "first_notification".into(),
            })
        }
    };
    if first == 0 {
        return Err(a.invalid("first_notification", "0", "must be >= 1"));
    }
    let last: u32 = a.num("last_notification", 0)?;
    if last != 0 && last < first {
        return Err(a.invalid(
            "last_notification",
            &last.to_string(),
            "must be 0 or >= first_notification",
        ));
    }
    let groups = a.list("contact_groups");
    if groups.is_empty() {
        return Err(ValidationError::MissingRequiredAttribute {
            kind: ObjectKind::Escalation,
            attr: "contact_groups".into(),
        });
    }
    Ok(EscalationDef {
        host_pattern: a.req("host_name")?.to_string(),
        service_pattern: a.opt("service_description").map(str::to_string),
        first_notification: first,
        last_notification: last,
        contact_groups: groups,
        notification_interval_s: match a.opt("notification_interval") {
            None => None,
            Some(_) => Some(a.num("notification_interval", 0)?),
        },
    })
}

fn build_site(a: &Attrs) -> Result<SiteDef, ValidationError> {
    let coord = |attr: &str, limit: f64| -> Result<f64, ValidationError> {
        let raw = a.req(attr)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| a.invalid(attr, raw, "not a number"))?;
        if !(-limit..=limit).contains(&v) {
            return Err(a.invalid(attr, raw, &format!("outside [-{limit}, {limit}]")));
        }
        Ok(v)
    };
    Ok(SiteDef {
        site_name: a.req("site_name")?.to_string(),
        alias: a.opt("alias").map(str::to_string),
        latitude: coord("latitude", 90.0)?,
        longitude: coord("longitude", 180.0)?,
        vos: a.list("vos"),
    })
}

fn dangling(kind: ObjectKind, name: &str) -> ValidationError {
    ValidationError::DanglingReference {
        kind,
        name: name.to_string(),
    }
}

fn resolve_references(m: &Model) -> Result<(), ValidationError> {
    let command_exists = |c: &CommandRef| m.commands.contains_key(&c.name) || is_builtin_check(&c.name);
    let need_command = |c: &CommandRef| {
        if command_exists(c) {
            Ok(())
        } else {
            Err(dangling(ObjectKind::Command, &c.name))
        }
    };
    let need_groups = |groups: &[String]| {
        groups
            .iter()
            .find(|g| !m.contact_groups.contains_key(*g))
            .map_or(Ok(()), |g| Err(dangling(ObjectKind::ContactGroup, g)))
    };
    let need_vos = |vos: &[String]| {
        vos.iter()
            .find(|v| !m.vos.contains_key(*v))
            .map_or(Ok(()), |v| Err(dangling(ObjectKind::Vo, v)))
    };
    // Event handlers and notify commands run external programs, so they must be defined.
    let need_defined = |c: &CommandRef| {
        if m.commands.contains_key(&c.name) {
            Ok(())
        } else {
            Err(dangling(ObjectKind::Command, &c.name))
        }
    };

    for h in m.hosts.values() {
        if let Some(p) = h.parents.iter().find(|p| !m.hosts.contains_key(*p)) {
            return Err(dangling(ObjectKind::Host, p));
        }
        if let Some(site) = &h.site {
            if !m.sites.contains_key(site) {
                return Err(dangling(ObjectKind::Site, site));
            }
        }
        if let Some(c) = &h.check_command {
            need_command(c)?;
        }
        if let Some(c) = &h.event_handler {
            need_defined(c)?;
        }
        need_groups(&h.contact_groups)?;
    }
    for s in m.services.values() {
        if !m.hosts.contains_key(&s.host_name) {
            return Err(dangling(ObjectKind::Host, &s.host_name));
        }
        need_command(&s.check_command)?;
        if let Some(c) = &s.event_handler {
            need_defined(c)?;
        }
        need_groups(&s.contact_groups)?;
        need_vos(&s.vos)?;
    }
    for c in m.contacts.values() {
        if let Some(cmd) = &c.notify_command {
            need_defined(cmd)?;
        }
    }
    for g in m.contact_groups.values() {
        if let Some(member) = g.members.iter().find(|c| !m.contacts.contains_key(*c)) {
            return Err(dangling(ObjectKind::Contact, member));
        }
    }
    for e in &m.escalations {
        if e.host_pattern != "*" && !m.hosts.contains_key(&e.host_pattern) {
            return Err(dangling(ObjectKind::Host, &e.host_pattern));
        }
        if let Some(svc) = &e.service_pattern {
            if svc != "*" && e.host_pattern != "*" && m.service(&e.host_pattern, svc).is_none() {
                return Err(dangling(
                    ObjectKind::Service,
                    &format!("{}/{}", e.host_pattern, svc),
                ));
            }
        }
        need_groups(&e.contact_groups)?;
    }
    for site in m.sites.values() {
        need_vos(&site.vos)?;
    }
    Ok(())
}

/// Depth-first search in definition order; returns the first cycle found,
/// starting at the host where it was re-entered.
fn find_parent_cycle(hosts: &IndexMap<String, HostDef>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }

    fn visit<'a>(
        name: &'a str,
        hosts: &'a IndexMap<String, HostDef>,
        marks: &mut IndexMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        marks.insert(name, Mark::Active);
        stack.push(name);
        for p in &hosts[name].parents {
            match marks.get(p.as_str()).copied().unwrap_or(Mark::New) {
                Mark::Active => {
                    let start = stack.iter().position(|n| *n == p).expect("active host is on the stack");
                    return Some(stack[start..].iter().map(|s| s.to_string()).collect());
                }
                Mark::New => {
                    if let Some(c) = visit(p, hosts, marks, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        marks.insert(name, Mark::Done);
        None
    }

    let mut marks: IndexMap<&str, Mark> = IndexMap::new();
    let mut stack = Vec::new();
    let mut seen = HashSet::new();
    for name in hosts.keys() {
        if seen.insert(name.as_str()) && marks.get(name.as_str()).copied().unwrap_or(Mark::New) == Mark::New {
            if let Some(c) = visit(name, hosts, &mut marks, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(text: &str) -> Result<Model, ValidationError> {
        link_and_validate(&parse_objects(text).unwrap())
    }

    #[test]
    fn dangling_parent() {
        let err = link("define host{\n host_name ce01\n address 10.0.0.1\n parents router9\n}").unwrap_err();
        assert_eq!(
            err,
            ValidationError::DanglingReference {
                kind: ObjectKind::Host,
                name: "router9".into()
            }
        );
    }

    #[test]
    fn two_host_cycle() {
        let err = link(
            "define host{\n host_name router1\n address a\n parents router2\n}\n\
             define host{\n host_name router2\n address b\n parents router1\n}",
        )
        .unwrap_err();
        assert_eq!(
            err,
            ValidationError::ParentCycle(vec!["router1".into(), "router2".into()])
        );
    }

    #[test]
    fn self_parent_is_a_cycle() {
        let err = link("define host{\n host_name a\n address a\n parents a\n}").unwrap_err();
        assert_eq!(err, ValidationError::ParentCycle(vec!["a".into()]));
    }

    #[test]
    fn unknown_attribute_is_rejected() {
        let err = link("define host{\n host_name a\n address a\n adress b\n}").unwrap_err();
        assert!(matches!(err, ValidationError::UnknownAttribute { ref attr, .. } if attr == "adress"));
    }

    #[test]
    fn missing_required() {
        let err = link("define host{\n host_name a\n}").unwrap_err();
        assert_eq!(
            err,
            ValidationError::MissingRequiredAttribute {
                kind: ObjectKind::Host,
                attr: "address".into()
            }
        );
    }

    #[test]
    fn retry_longer_than_check_interval() {
        let err = link(
            "define host{\n host_name a\n address a\n check_interval 10\n retry_interval 20\n}",
        )
        .unwrap_err();
        assert!(matches!(err, ValidationError::InvalidValue { ref attr, .. } if attr == "retry_interval"));
    }

    #[test]
    fn coordinates_in_range() {
        let err = link("define site{\n site_name s\n latitude 91\n longitude 0\n}").unwrap_err();
        assert!(matches!(err, ValidationError::InvalidValue { ref attr, .. } if attr == "latitude"));
        assert!(link("define site{\n site_name s\n latitude -90\n longitude 180\n}").is_ok());
    }

    #[test]
    fn escalation_window_validated() {
        let base = "define contact{\n contact_name c\n}\ndefine contactgroup{\n contactgroup_name g\n members c\n}\n\
                    define host{\n host_name h\n address a\n}\n";
        let err = link(&format!(
            "{base}define escalation{{\n host_name h\n first_notification 3\n last_notification 2\n contact_groups g\n}}"
        ))
        .unwrap_err();
        assert!(matches!(err, ValidationError::InvalidValue { ref attr, .. } if attr == "last_notification"));
        assert!(link(&format!(
            "{base}define escalation{{\n host_name h\n first_notification 3\n contact_groups g\n}}"
        ))
        .is_ok());
    }

    #[test]
    fn group_member_must_exist() {
        let err = link("define contactgroup{\n contactgroup_name g\n members ghost\n}").unwrap_err();
        assert_eq!(
            err,
            ValidationError::DanglingReference {
                kind: ObjectKind::Contact,
                name: "ghost".into()
            }
        );
    }

    #[test]
    fn service_needs_known_command_and_vo() {
        let base = "define host{\n host_name h\n address a\n}\n";
        let err = link(&format!(
            "{base}define service{{\n host_name h\n service_description s\n check_command nope\n}}"
        ))
        .unwrap_err();
        assert!(matches!(err, ValidationError::DanglingReference { kind: ObjectKind::Command, .. }));
        let err = link(&format!(
            "{base}define service{{\n host_name h\n service_description s\n check_command check_tcp!1\n vos atlas\n}}"
        ))
        .unwrap_err();
        assert!(matches!(err, ValidationError::DanglingReference { kind: ObjectKind::Vo, .. }));
    }

    #[test]
    fn duplicate_service() {
        let err = link(
            "define host{\n host_name h\n address a\n}\n\
             define service{\n host_name h\n service_description s\n check_command check_tcp!1\n}\n\
             define service{\n host_name h\n service_description s\n check_command check_tcp!2\n}",
        )
        .unwrap_err();
        assert!(matches!(err, ValidationError::DuplicateObject { kind: ObjectKind::Service, .. }));
    }
}
