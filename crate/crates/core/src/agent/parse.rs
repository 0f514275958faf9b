use serde_json::Value;

/// What a provider reply asks the executor to do next.
#[derive(Debug, Clone, PartialEq)]
pub enum StepHead {
    Tool {
        thought: String,
        tool: String,
        input: Value,
    },
    Decompose {
        thought: String,
        subquestions: Vec<String>,
    },
    Final {
        thought: String,
        answer: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    pub reason: String,
}

impl ParseFailure {
    fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Thought,
    Action,
    ActionInput,
    FinalAnswer,
}

const LABELS: [(&str, Label); 4] = [
    ("Thought:", Label::Thought),
    ("Action Input:", Label::ActionInput),
    ("Action:", Label::Action),
    ("Final Answer:", Label::FinalAnswer),
];

fn label_of(line: &str) -> Option<(Label, &str)> {
    let trimmed = line.trim_start();
    LABELS
        .iter()
        .find_map(|(prefix, label)| trimmed.strip_prefix(prefix).map(|rest| (*label, rest)))
}

/// Split labeled sections. A section runs until the next labeled line; text
/// from the first `Observation:` line on is ignored since only the framework
/// may write observations.
fn sections(text: &str) -> Result<Vec<(Label, String)>, ParseFailure> {
    let mut out: Vec<(Label, String)> = Vec::new();
    for line in text.lines() {
        if line.trim_start().starts_with("Observation:") {
            break;
        }
        match label_of(line) {
            Some((label, rest)) => {
                if out.iter().any(|(l, _)| *l == label) {
                    return Err(ParseFailure::new(format!("repeated label {label:?}")));
                }
                out.push((label, rest.trim().to_owned()));
            }
            None => match out.last_mut() {
                Some((_, body)) => {
                    body.push('\n');
                    body.push_str(line);
                }
                None if line.trim().is_empty() => {}
                // Leading unlabeled prose is tolerated and dropped.
                None => {}
            },
        }
    }
    for (_, body) in &mut out {
        *body = body.trim().to_owned();
    }
    Ok(out)
}

fn strip_code_fence(s: &str) -> &str {
    let t = s.trim();
    let Some(inner) = t.strip_prefix("```") else {
        return t;
    };
    let inner = inner.strip_suffix("```").unwrap_or(inner);
    // drop an optional language tag on the opening fence line
    match inner.split_once('\n') {
        Some((first, rest)) if !first.trim().starts_with(['{', '[']) => rest.trim(),
        _ => inner.trim(),
    }
}

/// Parse one executor reply in the labeled-line format.
pub fn parse_step(output: &str) -> Result<StepHead, ParseFailure> {
    let secs = sections(output)?;
    let get = |label: Label| secs.iter().find(|(l, _)| *l == label).map(|(_, b)| b.as_str());
    let thought = get(Label::Thought).unwrap_or("").to_owned();
    let action = get(Label::Action);
    let input = get(Label::ActionInput);
    let final_answer = get(Label::FinalAnswer);

    match (action, final_answer) {
        (Some(_), Some(_)) => Err(ParseFailure::new("both Action and Final Answer present")),
        (None, Some(answer)) => {
            if input.is_some() {
                return Err(ParseFailure::new("Action Input without Action"));
            }
            if answer.is_empty() {
                return Err(ParseFailure::new("empty Final Answer"));
            }
            Ok(StepHead::Final {
                thought,
                answer: answer.to_owned(),
            })
        }
        (Some(action), None) => {
            let name = action.trim().trim_matches('`').trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(ParseFailure::new(format!("invalid action name {name:?}")));
            }
            let raw = input.ok_or_else(|| ParseFailure::new("Action without Action Input"))?;
            let value: Value = serde_json::from_str(strip_code_fence(raw))
                .map_err(|e| ParseFailure::new(format!("Action Input is not JSON: {e}")))?;
            if name == "decompose" {
                let items = value
                    .as_array()
                    .ok_or_else(|| ParseFailure::new("decompose input must be a list of strings"))?;
                let subquestions = items
                    .iter()
                    .map(|v| v.as_str().map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| ParseFailure::new("decompose input must be a list of non-empty strings"))?;
                if subquestions.is_empty() {
                    return Err(ParseFailure::new("decompose input is empty"));
                }
                Ok(StepHead::Decompose { thought, subquestions })
            } else {
                if !value.is_object() {
                    return Err(ParseFailure::new("Action Input must be a JSON object"));
                }
                Ok(StepHead::Tool {
                    thought,
                    tool: name.to_owned(),
                    input: value,
                })
            }
        }
        (None, None) => Err(ParseFailure::new("no Action or Final Answer")),
    }
}

/// Parsed assessor reply.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub names: Vec<String>,
    pub rationale: String,
    pub found_list: bool,
}

/// Read `Selected Tools: [a, b]` (or the first bracketed list) and an
/// optional `Rationale:` line.
pub fn parse_selection(output: &str) -> Selection {
    let mut sel = Selection::default();
    let line = output
        .lines()
        .find(|l| l.trim_start().starts_with("Selected Tools:"))
        .or_else(|| output.lines().find(|l| l.contains('[') && l.contains(']')));
    if let Some(line) = line {
        if let (Some(open), Some(close)) = (line.find('['), line.rfind(']')) {
            if open < close {
                sel.found_list = true;
                for item in line[open + 1..close].split(',') {
                    let name = item.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
                    if !name.is_empty() && !sel.names.iter().any(|n| n == name) {
                        sel.names.push(name.to_owned());
                    }
                }
            }
        }
    }
    if let Some(r) = output.lines().find_map(|l| l.trim_start().strip_prefix("Rationale:")) {
        sel.rationale = r.trim().to_owned();
    }
    sel
}
