/// Source of provenance timestamps (RFC 3339). Injected so that documents
/// are reproducible under test.
pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Clone)]
pub struct FixedClock(pub String);

impl FixedClock {
    pub fn epoch() -> Self {
        FixedClock("1970-01-01T00:00:00Z".to_string())
    }

    /// Accepts RFC 3339 and normalizes to UTC with second precision.
    pub fn parse(text: &str) -> Option<Self> {
        let t = chrono::DateTime::parse_from_rfc3339(text.trim()).ok()?;
        Some(FixedClock(
            t.with_timezone(&chrono::Utc)
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        ))
    }

    pub fn from_unix(secs: i64) -> Option<Self> {
        let t = chrono::DateTime::from_timestamp(secs, 0)?;
        Some(FixedClock(
            t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        ))
    }
}

impl Clock for FixedClock {
    fn now(&self) -> String {
        self.0.clone()
    }
}
