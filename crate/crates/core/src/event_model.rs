//! Client event records, the six-level event namespace and the pattern
//! language used to select events by name.

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

/// Names of the six namespace levels, outermost first.
pub const COMPONENTS: [&str; 6] = ["client", "page", "section", "component", "element", "action"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NameError {
    #[error("expected 6 colon-separated components, found {0}")]
    ComponentCount(usize),
    #[error("invalid character {ch:?} in {component} component")]
    Charset { component: &'static str, ch: char },
    #[error("{0} component must not be empty")]
    EmptyRequiredComponent(&'static str),
}

/// A hierarchical `client:page:section:component:element:action` name.
///
/// The colon-joined text is the canonical form; components are slices into it.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventName {
    text: String,
    colons: [usize; 5],
}

impl EventName {
    pub fn parse(raw: &str) -> Result<Self, NameError> {
        let count = raw.split(':').count();
        if count != 6 {
            return Err(NameError::ComponentCount(count));
        }
        let mut colons = [0usize; 5];
        for (slot, (idx, _)) in colons.iter_mut().zip(raw.match_indices(':')) {
            *slot = idx;
        }
        for (part, component) in raw.split(':').zip(COMPONENTS) {
            if let Some(ch) = part
                .chars()
                .find(|c| !(c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '_'))
            {
                return Err(NameError::Charset { component, ch });
            }
        }
        let name = EventName {
            text: raw.to_owned(),
            colons,
        };
        if name.client().is_empty() {
            return Err(NameError::EmptyRequiredComponent("client"));
        }
        if name.action().is_empty() {
            return Err(NameError::EmptyRequiredComponent("action"));
        }
        Ok(name)
    }

    /// Builds a name from its six components.
    pub fn from_components(parts: [&str; 6]) -> Result<Self, NameError> {
        Self::parse(&parts.join(":"))
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Component at `level` (0 = client, 5 = action).
    pub fn component(&self, level: usize) -> &str {
        assert!(level < 6, "event names have six components");
        let start = if level == 0 { 0 } else { self.colons[level - 1] + 1 };
        let end = if level == 5 { self.text.len() } else { self.colons[level] };
        &self.text[start..end]
    }

    pub fn components(&self) -> [&str; 6] {
        std::array::from_fn(|i| self.component(i))
    }

    pub fn client(&self) -> &str {
        self.component(0)
    }
    pub fn page(&self) -> &str {
        self.component(1)
    }
    pub fn section(&self) -> &str {
        self.component(2)
    }
    pub fn element(&self) -> &str {
        self.component(4)
    }
    pub fn action(&self) -> &str {
        self.component(5)
    }
}

impl fmt::Display for EventName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for EventName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EventName({})", self.text)
    }
}

impl FromStr for EventName {
    type Err = NameError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for EventName {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for EventName {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        EventName::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Who triggered an event: `{client, server} x {user, app}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventInitiator {
    ClientUser,
    ClientApp,
    ServerUser,
    ServerApp,
}

impl EventInitiator {
    pub const ALL: [EventInitiator; 4] = [
        EventInitiator::ClientUser,
        EventInitiator::ClientApp,
        EventInitiator::ServerUser,
        EventInitiator::ServerApp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventInitiator::ClientUser => "client_user",
            EventInitiator::ClientApp => "client_app",
            EventInitiator::ServerUser => "server_user",
            EventInitiator::ServerApp => "server_app",
        }
    }

    fn parse(raw: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.as_str() == raw)
    }
}

/// One logged interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEvent {
    pub event_initiator: EventInitiator,
    pub event_name: EventName,
    /// `None` for logged-out traffic.
    pub user_id: Option<u64>,
    pub session_id: String,
    pub ip: String,
    /// Milliseconds since the epoch, UTC.
    pub timestamp: i64,
    pub event_details: Map<String, Value>,
}

impl ClientEvent {
    pub fn is_logged_in(&self) -> bool {
        self.user_id.is_some()
    }

    /// The event as a JSON value, in the log line layout.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("client events always serialize")
    }

    /// One log line (no trailing newline). Keys are emitted in sorted order.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_value()).expect("client events always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    #[default]
    Strict,
    Lenient,
}

impl FromStr for ValidationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ValidationMode::Strict),
            "lenient" => Ok(ValidationMode::Lenient),
            other => Err(format!("unknown validation mode {other:?} (expected strict or lenient)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldProblem {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Why a record was rejected, plus any warnings raised before rejection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub problems: Vec<FieldProblem>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    fn problem(&mut self, field: &str, message: impl Into<String>) {
        self.problems.push(FieldProblem {
            field: field.to_owned(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.problems.iter().map(|p| p.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for ValidationReport {}

/// An accepted record and the warnings lenient mode attached to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub event: ClientEvent,
    pub warnings: Vec<String>,
}

const FIELDS: [&str; 7] = [
    "event_initiator",
    "event_name",
    "user_id",
    "session_id",
    "ip",
    "timestamp",
    "event_details",
];

/// Checks a decoded log record against the client event contract.
///
/// Strict mode rejects on any problem. Lenient mode repairs case drift in
/// the name and initiator, tolerates unknown fields and a missing details
/// object, and warns about each repair; everything else is still rejected.
pub fn validate_event(record: &Value, mode: ValidationMode) -> Result<Validated, ValidationReport> {
    let mut report = ValidationReport::default();
    let lenient = mode == ValidationMode::Lenient;

    let Some(obj) = record.as_object() else {
        report.problem("record", "not an object");
        return Err(report);
    };

    for key in obj.keys().filter(|k| !FIELDS.contains(&k.as_str())) {
        if lenient {
            report.warnings.push(format!("dropped unknown field {key:?}"));
        } else {
            report.problem(key, "unknown field");
        }
    }

    let event_initiator = match obj.get("event_initiator") {
        None => {
            report.problem("event_initiator", "missing");
            None
        }
        Some(Value::String(s)) => match EventInitiator::parse(s) {
            Some(i) => Some(i),
            None if lenient && EventInitiator::parse(&s.to_ascii_lowercase()).is_some() => {
                report
                    .warnings
                    .push(format!("lowercased event_initiator {s:?}"));
                EventInitiator::parse(&s.to_ascii_lowercase())
            }
            None => {
                report.problem("event_initiator", format!("unknown initiator {s:?}"));
                None
            }
        },
        Some(_) => {
            report.problem("event_initiator", "not a string");
            None
        }
    };

    let event_name = match obj.get("event_name") {
        None => {
            report.problem("event_name", "missing");
            None
        }
        Some(Value::String(s)) => match EventName::parse(s) {
            Ok(n) => Some(n),
            Err(NameError::Charset { .. }) if lenient => {
                match EventName::parse(&s.to_lowercase()) {
                    Ok(n) => {
                        report.warnings.push(format!("lowercased event_name {s:?}"));
                        Some(n)
                    }
                    Err(e) => {
                        report.problem("event_name", e.to_string());
                        None
                    }
                }
            }
            Err(e) => {
                report.problem("event_name", e.to_string());
                None
            }
        },
        Some(_) => {
            report.problem("event_name", "not a string");
            None
        }
    };

    let user_id = match obj.get("user_id") {
        None => {
            report.problem("user_id", "missing (use null for logged-out traffic)");
            None
        }
        Some(Value::Null) => Some(None),
        Some(v) => match v.as_u64() {
            Some(id) => Some(Some(id)),
            None => {
                report.problem("user_id", "not a non-negative integer");
                None
            }
        },
    };

    let session_id = match obj.get("session_id") {
        None => {
            report.problem("session_id", "missing");
            None
        }
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(Value::String(_)) => {
            report.problem("session_id", "empty");
            None
        }
        Some(_) => {
            report.problem("session_id", "not a string");
            None
        }
    };

    let ip = match obj.get("ip") {
        None => {
            report.problem("ip", "missing");
            None
        }
        Some(Value::String(s)) if s.parse::<IpAddr>().is_ok() => Some(s.clone()),
        Some(Value::String(s)) => {
            report.problem("ip", format!("not an IPv4 or IPv6 address: {s:?}"));
            None
        }
        Some(_) => {
            report.problem("ip", "not a string");
            None
        }
    };

    let timestamp = match obj.get("timestamp") {
        None => {
            report.problem("timestamp", "missing");
            None
        }
        Some(v) => match v.as_i64() {
            Some(ts) if ts > 0 => Some(ts),
            Some(ts) => {
                report.problem("timestamp", format!("must be positive, got {ts}"));
                None
            }
            None => {
                report.problem("timestamp", "not an integer");
                None
            }
        },
    };

    let event_details = match obj.get("event_details") {
        Some(Value::Object(m)) => Some(m.clone()),
        None if lenient => {
            report
                .warnings
                .push("missing event_details, using empty object".to_owned());
            Some(Map::new())
        }
        None => {
            report.problem("event_details", "missing");
            None
        }
        Some(_) => {
            report.problem("event_details", "not an object");
            None
        }
    };

    if !report.problems.is_empty() {
        return Err(report);
    }
    match (
        event_initiator,
        event_name,
        user_id,
        session_id,
        ip,
        timestamp,
        event_details,
    ) {
        (Some(ei), Some(name), Some(uid), Some(sid), Some(ip), Some(ts), Some(details)) => {
            Ok(Validated {
                event: ClientEvent {
                    event_initiator: ei,
                    event_name: name,
                    user_id: uid,
                    session_id: sid,
                    ip,
                    timestamp: ts,
                    event_details: details,
                },
                warnings: report.warnings,
            })
        }
        _ => unreachable!("every missing field records a problem"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PatternMode {
    #[default]
    Glob,
    Regex,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("pattern is empty")]
    Empty,
    #[error("invalid pattern {pattern:?}: {message}")]
    Syntax { pattern: String, message: String },
}

/// Translates a glob to an unanchored regex body: `*` becomes `.*`, every
/// other character is literal.
pub fn glob_to_regex(glob: &str) -> String {
    glob.split('*')
        .map(regex::escape)
        .collect::<Vec<_>>()
        .join(".*")
}

/// A compiled glob or regex that must match the whole event name.
///
/// Glob `*` crosses colons, so `*:profile_click` selects that action under
/// any client, page, section, component and element.
#[derive(Debug, Clone)]
pub struct EventPattern {
    source: String,
    mode: PatternMode,
    compiled: Regex,
}

impl EventPattern {
    pub fn compile(text: &str, mode: PatternMode) -> Result<Self, PatternError> {
        if text.is_empty() {
            return Err(PatternError::Empty);
        }
        let body = match mode {
            PatternMode::Glob => glob_to_regex(text),
            PatternMode::Regex => text.to_owned(),
        };
        let compiled = Regex::new(&format!("^(?:{body})$")).map_err(|e| PatternError::Syntax {
            pattern: text.to_owned(),
            message: e.to_string(),
        })?;
        Ok(EventPattern {
            source: text.to_owned(),
            mode,
            compiled,
        })
    }

    pub fn glob(text: &str) -> Result<Self, PatternError> {
        Self::compile(text, PatternMode::Glob)
    }

    pub fn regex(text: &str) -> Result<Self, PatternError> {
        Self::compile(text, PatternMode::Regex)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn mode(&self) -> PatternMode {
        self.mode
    }

    pub fn matches(&self, name: &EventName) -> bool {
        self.compiled.is_match(name.as_str())
    }

    pub fn matches_str(&self, text: &str) -> bool {
        self.compiled.is_match(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn record() -> Value {
        json!({
            "event_initiator": "client_user",
            "event_name": "web:home:mentions:stream:avatar:profile_click",
            "user_id": 12,
            "session_id": "abc",
            "ip": "10.0.0.1",
            "timestamp": 1_325_376_000_000i64,
            "event_details": {"profile_id": 99}
        })
    }

    #[test]
    fn parses_six_components() {
        let n = EventName::parse("web:home:mentions:stream:avatar:profile_click").unwrap();
        assert_eq!(
            n.components(),
            ["web", "home", "mentions", "stream", "avatar", "profile_click"]
        );
        assert_eq!(n.to_string(), "web:home:mentions:stream:avatar:profile_click");
    }

    #[test]
    fn empty_middle_components_are_fine() {
        let n = EventName::parse("web:settings::::view").unwrap();
        assert_eq!(n.components(), ["web", "settings", "", "", "", "view"]);
    }

    #[test]
    fn rejects_bad_names() {
        assert_eq!(EventName::parse("web:home"), Err(NameError::ComponentCount(2)));
        assert_eq!(
            EventName::parse("a:b:c:d:e:f:g"),
            Err(NameError::ComponentCount(7))
        );
        assert!(matches!(
            EventName::parse("Web:home:::x:click"),
            Err(NameError::Charset { component: "client", ch: 'W' })
        ));
        assert!(matches!(
            EventName::parse("web:ho-me::::click"),
            Err(NameError::Charset { component: "page", .. })
        ));
        assert_eq!(
            EventName::parse(":home::::click"),
            Err(NameError::EmptyRequiredComponent("client"))
        );
        assert_eq!(
            EventName::parse("web:home::::"),
            Err(NameError::EmptyRequiredComponent("action"))
        );
    }

    #[test]
    fn valid_record_round_trips() {
        let v = validate_event(&record(), ValidationMode::Strict).unwrap();
        assert!(v.warnings.is_empty());
        assert_eq!(v.event.to_value(), record());
        assert_eq!(v.event.user_id, Some(12));
    }

    #[test]
    fn logged_out_record() {
        let mut r = record();
        r["user_id"] = Value::Null;
        let v = validate_event(&r, ValidationMode::Strict).unwrap();
        assert!(!v.event.is_logged_in());
    }

    #[test]
    fn lenient_lowercases_names() {
        let mut r = record();
        r["event_name"] = json!("Web:Home:mentions:stream:avatar:profile_click");
        let err = validate_event(&r, ValidationMode::Strict).unwrap_err();
        assert_eq!(err.problems[0].field, "event_name");

        let v = validate_event(&r, ValidationMode::Lenient).unwrap();
        assert_eq!(
            v.event.event_name.as_str(),
            "web:home:mentions:stream:avatar:profile_click"
        );
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn missing_session_rejected_in_both_modes() {
        let mut r = record();
        r.as_object_mut().unwrap().remove("session_id");
        for mode in [ValidationMode::Strict, ValidationMode::Lenient] {
            let err = validate_event(&r, mode).unwrap_err();
            assert_eq!(err.problems.len(), 1);
            assert_eq!(err.problems[0].field, "session_id");
        }
    }

    #[test]
    fn collects_every_problem() {
        let r = json!({
            "event_initiator": "robot",
            "event_name": "web:home",
            "user_id": -1,
            "session_id": "",
            "ip": "not-an-ip",
            "timestamp": 0,
            "event_details": []
        });
        let err = validate_event(&r, ValidationMode::Lenient).unwrap_err();
        let fields: Vec<&str> = err.problems.iter().map(|p| p.field.as_str()).collect();
        assert_eq!(
            fields,
            ["event_initiator", "event_name", "user_id", "session_id", "ip", "timestamp", "event_details"]
        );
    }

    #[test]
    fn unknown_fields_and_missing_details() {
        let mut r = record();
        r["extra"] = json!(1);
        r.as_object_mut().unwrap().remove("event_details");
        assert_eq!(
            validate_event(&r, ValidationMode::Strict).unwrap_err().problems.len(),
            2
        );
        let v = validate_event(&r, ValidationMode::Lenient).unwrap();
        assert_eq!(v.warnings.len(), 2);
        assert!(v.event.event_details.is_empty());
    }

    #[test]
    fn ipv6_accepted() {
        let mut r = record();
        r["ip"] = json!("2001:db8::1");
        assert!(validate_event(&r, ValidationMode::Strict).is_ok());
    }

    #[test]
    fn glob_matching() {
        let name = EventName::parse("web:home:mentions:stream:avatar:profile_click").unwrap();
        let iphone = EventName::parse("iphone:profile:header:photo:avatar:profile_click").unwrap();
        let other = EventName::parse("iphone:home:mentions:stream:avatar:click").unwrap();

        let mentions = EventPattern::glob("web:home:mentions:*").unwrap();
        assert!(mentions.matches(&name));
        assert!(!mentions.matches(&other));

        let clicks = EventPattern::glob("*:profile_click").unwrap();
        assert!(clicks.matches(&name));
        assert!(clicks.matches(&iphone));
        assert!(!clicks.matches(&other));

        // whole-name, not substring
        assert!(!EventPattern::glob("home").unwrap().matches(&name));
        // glob metacharacters other than * are literal
        assert!(!EventPattern::glob("web.home*").unwrap().matches(&name));
    }

    #[test]
    fn regex_is_anchored() {
        let name = EventName::parse("web:home:mentions:stream:avatar:profile_click").unwrap();
        assert!(EventPattern::regex("web:.*_click").unwrap().matches(&name));
        assert!(!EventPattern::regex("home").unwrap().matches(&name));
        assert!(EventPattern::regex("web|iphone").is_ok());
        assert!(!EventPattern::regex("web|iphone").unwrap().matches(&name));
        assert!(matches!(
            EventPattern::regex("web:(home"),
            Err(PatternError::Syntax { .. })
        ));
        assert_eq!(EventPattern::glob("").unwrap_err(), PatternError::Empty);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn component() -> impl Strategy<Value = String> {
            "[a-z0-9_]{0,6}"
        }

        fn required() -> impl Strategy<Value = String> {
            "[a-z0-9_]{1,6}"
        }

        // Backtracking wildcard matcher, independent of the regex engine.
        fn wildcard_match(pat: &[u8], text: &[u8]) -> bool {
            match pat.split_first() {
                None => text.is_empty(),
                Some((b'*', rest)) => (0..=text.len()).any(|i| wildcard_match(rest, &text[i..])),
                Some((c, rest)) => text.first() == Some(c) && wildcard_match(rest, &text[1..]),
            }
        }

        fn name_text() -> impl Strategy<Value = String> {
            (required(), component(), component(), component(), component(), required())
                .prop_map(|(a, b, c, d, e, f)| [a, b, c, d, e, f].join(":"))
        }

        proptest! {
            #[test]
            fn parse_serialize_identity(text in name_text()) {
                let n = EventName::parse(&text).unwrap();
                prop_assert_eq!(n.to_string(), text.clone());
                prop_assert_eq!(EventName::parse(&n.to_string()).unwrap(), n);
            }

            #[test]
            fn universal_patterns_match_everything(text in name_text()) {
                let n = EventName::parse(&text).unwrap();
                prop_assert!(EventPattern::glob("*").unwrap().matches(&n));
                prop_assert!(EventPattern::glob("*:*:*:*:*:*").unwrap().matches(&n));
            }

            #[test]
            fn glob_agrees_with_its_translation(
                glob in "[a-c:*_]{1,10}",
                text in "[a-c_]{1,3}:[a-c]{0,2}:[a-c]{0,2}:[a-c]{0,2}:[a-c]{0,2}:[a-c_]{1,3}",
            ) {
                let pattern = EventPattern::glob(&glob).unwrap();
                let translated = EventPattern::regex(&glob_to_regex(&glob)).unwrap();
                let expected = wildcard_match(glob.as_bytes(), text.as_bytes());
                prop_assert_eq!(pattern.matches_str(&text), expected);
                prop_assert_eq!(translated.matches_str(&text), expected);
            }
        }
    }
}
