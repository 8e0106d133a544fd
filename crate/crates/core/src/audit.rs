use serde::Serialize;

/// One checked side condition, as reported to callers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConditionCheck {
    pub id: String,
    pub holds: bool,
    pub detail: String,
}

impl ConditionCheck {
    pub fn new(id: &str, holds: bool, detail: impl Into<String>) -> Self {
        ConditionCheck {
            id: id.to_string(),
            holds,
            detail: detail.into(),
        }
    }
}

/// Failed checks joined for error messages.
pub(crate) fn failed(c: &[ConditionCheck]) -> String {
    c.iter()
        .filter(|c| !c.holds)
        .map(|c| format!("({}) {}", c.id, c.detail))
        .collect::<Vec<_>>()
        .join("; ")
}
