//! Typed parsing of oracle responses, section by section.

use serde::{Deserialize, Serialize};

use crate::symbolic::{Action, OperatorDef};

use super::{OracleError, OracleRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditMode {
    Add,
    Edit,
    Delete,
}

/// One operator change from a domain or decomposition response.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorEdit {
    pub name: String,
    pub mode: EditMode,
    /// The raw `(:action ...)` block (empty for deletes).
    pub pddl: String,
}

/// A predicate declaration line: `- (name ?a - t): state|other. description`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateDecl {
    pub decl: String,
    pub kind_label: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateChangeValue {
    True,
    False,
    Remove,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateChange {
    pub atom: String,
    pub value: StateChangeValue,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainEditReply {
    pub operators: Vec<OperatorEdit>,
    pub predicates: Vec<PredicateDecl>,
    pub init_changes: Vec<StateChange>,
    pub goal_changes: Vec<StateChange>,
}

/// A lifted skill argument: an operator parameter reference (`p_part`
/// style) or a literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkillArg {
    Param(String),
    Literal(String),
}

/// A skill call with lifted arguments, reusable across bindings of the same
/// operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillTemplate {
    pub name: String,
    pub args: Vec<SkillArg>,
}

impl SkillTemplate {
    /// Instantiate against a bound action of `op`.
    pub fn bind(
        &self,
        op: &OperatorDef,
        action: &Action,
    ) -> Result<crate::envs::SkillCall, OracleError> {
        let mut args = Vec::with_capacity(self.args.len());
        for a in &self.args {
            match a {
                SkillArg::Param(var) => {
                    let idx = op.param_index(var).ok_or_else(|| OracleError::ParseFailure {
                        section: "# Skill Mapping".into(),
                        detail: format!("no parameter `{}` on operator {}", var, op.name),
                    })?;
                    args.push(action.binding[idx].clone());
                }
                SkillArg::Literal(text) => args.push(text.clone()),
            }
        }
        Ok(crate::envs::SkillCall::new(self.name.clone(), args))
    }

    /// Parse one `name(arg, ...)` bullet. Arguments of the form
    /// `<param>_<type>` matching an operator parameter become parameter
    /// references; quoted or unmatched tokens stay literal.
    pub fn parse(text: &str, op: &OperatorDef) -> Result<SkillTemplate, OracleError> {
        let text = text.trim();
        let open = text.find('(').ok_or_else(|| OracleError::ParseFailure {
            section: "# Skill Mapping".into(),
            detail: format!("`{}` is not a skill call", text),
        })?;
        let close = text.rfind(')').ok_or_else(|| OracleError::ParseFailure {
            section: "# Skill Mapping".into(),
            detail: format!("`{}` is missing a closing parenthesis", text),
        })?;
        let name = text[..open].trim().to_string();
        let inner = &text[open + 1..close];
        let mut args = Vec::new();
        for raw in inner.split(',') {
            let token = raw.trim();
            if token.is_empty() {
                continue;
            }
            let unquoted = token.trim_matches(|c| c == '\'' || c == '"');
            if unquoted != token {
                args.push(SkillArg::Literal(unquoted.to_string()));
                continue;
            }
            let param = op.params.iter().find(|p| {
                format!("{}_{}", p.name, p.ty) == token || p.name == token
            });
            match param {
                Some(p) => args.push(SkillArg::Param(p.name.clone())),
                None => args.push(SkillArg::Literal(token.to_string())),
            }
        }
        Ok(SkillTemplate { name, args })
    }
}

/// The reasoner's machine-readable decision, mirroring the response JSON
/// schema byte-compatibly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDecisionRaw {
    pub type_of_fix: String,
    pub operators: Vec<String>,
    /// Skill calls to execute first; only used by `prior-skills` fixes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skills: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleReply {
    DomainEdit(DomainEditReply),
    Translate(Vec<String>),
    Reasoner(RecoveryDecisionRaw),
    /// Raw classifier source from `# Predicate Grounding` / `# Fixed Code`.
    Classifier(String),
    Plan(Vec<Action>),
    Labels(Vec<(String, bool)>),
    /// Reasoner analysis stage has no structure to extract.
    Text(String),
}

fn section<'a>(text: &'a str, header: &str) -> Option<&'a str> {
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find(header) {
        let start = search_from + rel;
        let line_start = text[..start].rfind('\n').map(|i| i + 1).unwrap_or(0);
        let prefix = text[line_start..start].trim();
        if prefix.is_empty() {
            let body_start = start + header.len();
            let rest = &text[body_start..];
            // section ends at the next header line of the same style
            let marker = if header.starts_with("###") { "\n###" } else { "\n#" };
            let end = rest.find(marker).unwrap_or(rest.len());
            return Some(&rest[..end]);
        }
        search_from = start + header.len();
    }
    None
}

fn require_section<'a>(text: &'a str, header: &str) -> Result<&'a str, OracleError> {
    section(text, header).ok_or_else(|| OracleError::ParseFailure {
        section: header.to_string(),
        detail: "section missing from response".to_string(),
    })
}

/// Extract the first fenced code block from `text` (any language tag).
fn fenced_block(text: &str) -> Option<String> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let nl = after.find('\n')?;
    let body = &after[nl + 1..];
    let end = body.find("```")?;
    Some(body[..end].trim_end().to_string())
}

fn parse_state_changes(body: &str) -> Vec<StateChange> {
    let mut out = Vec::new();
    for line in body.lines() {
        let line = line.trim().trim_start_matches('-').trim();
        if line.is_empty() || line.eq_ignore_ascii_case("none") || line.starts_with("<!--") {
            continue;
        }
        let Some(idx) = line.rfind(':') else { continue };
        let atom = line[..idx].trim();
        if !atom.starts_with('(') {
            continue;
        }
        let value = match line[idx + 1..].trim().to_ascii_lowercase().as_str() {
            "true" => StateChangeValue::True,
            "false" => StateChangeValue::False,
            "remove" => StateChangeValue::Remove,
            _ => continue,
        };
        out.push(StateChange { atom: atom.to_string(), value });
    }
    out
}

fn parse_domain_edit(text: &str) -> Result<DomainEditReply, OracleError> {
    let mut reply = DomainEditReply::default();

    if let Some(body) = section(text, "### Change/Add Action(s)") {
        // entries look like `1. name: add` followed by a ```pddl block
        let mut rest = body;
        loop {
            let Some(head) = find_action_header(rest) else { break };
            let (name, mode, after) = head;
            let block = fenced_block(after).unwrap_or_default();
            if mode != EditMode::Delete && block.is_empty() {
                return Err(OracleError::ParseFailure {
                    section: "### Change/Add Action(s)".into(),
                    detail: format!("action `{}` has no pddl block", name),
                });
            }
            let consumed = if block.is_empty() {
                0
            } else {
                // advance past the closing fence of this entry's code block
                match after.find("```") {
                    Some(open) => match after[open + 3..].find("```") {
                        Some(close) => open + 3 + close + 3,
                        None => after.len(),
                    },
                    None => 0,
                }
            };
            reply.operators.push(OperatorEdit { name, mode, pddl: block });
            rest = &after[consumed..];
        }
    }

    if let Some(body) = section(text, "### Change/Add Predicate Definitions") {
        for line in body.lines() {
            let line = line.trim();
            let Some(stripped) = line.strip_prefix("- (") else { continue };
            let Some(close) = stripped.find(')') else { continue };
            let decl = format!("({})", &stripped[..close]);
            let after = &stripped[close + 1..];
            let after = after.trim_start_matches(':').trim();
            let (kind_label, description) = match after.find('.') {
                Some(dot) => (after[..dot].trim().to_string(), after[dot + 1..].trim().to_string()),
                None => (after.trim().to_string(), String::new()),
            };
            reply.predicates.push(PredicateDecl { decl, kind_label, description });
        }
    }

    if let Some(body) = section(text, "### Change Initial State") {
        reply.init_changes = parse_state_changes(body);
    }
    if let Some(body) = section(text, "### Change Goal State") {
        reply.goal_changes = parse_state_changes(body);
    }

    if reply.operators.is_empty() && reply.predicates.is_empty() && reply.goal_changes.is_empty() {
        return Err(OracleError::ParseFailure {
            section: "### Change/Add Action(s)".into(),
            detail: "response contains no actions, predicates or goal changes".into(),
        });
    }
    Ok(reply)
}

/// Find `N. name: mode` and return (name, mode, text after the header).
fn find_action_header(text: &str) -> Option<(String, EditMode, &str)> {
    for (offset, line) in text.lines().map(|l| (l.as_ptr() as usize - text.as_ptr() as usize, l)) {
        let trimmed = line.trim();
        let mut chars = trimmed.chars();
        let Some(first) = chars.next() else { continue };
        if !first.is_ascii_digit() {
            continue;
        }
        let Some(dot) = trimmed.find(". ") else { continue };
        let Some(colon) = trimmed[dot + 2..].find(':') else { continue };
        let name = trimmed[dot + 2..dot + 2 + colon].trim().to_string();
        let mode_text = trimmed[dot + 2 + colon + 1..].trim().to_ascii_lowercase();
        let mode = match mode_text.as_str() {
            "add" => EditMode::Add,
            "edit" => EditMode::Edit,
            "delete" => EditMode::Delete,
            _ => continue,
        };
        let after_start = offset + line.len();
        return Some((name, mode, &text[after_start.min(text.len())..]));
    }
    None
}

fn parse_translate(text: &str) -> Result<Vec<String>, OracleError> {
    let body = require_section(text, "# Skill Mapping")?;
    let mut out = Vec::new();
    for line in body.lines() {
        let line = line.trim();
        if line.starts_with("[END") {
            break;
        }
        let Some(item) = line.strip_prefix('-') else { continue };
        let item = item.trim();
        if !item.is_empty() {
            out.push(item.to_string());
        }
    }
    if out.is_empty() {
        return Err(OracleError::ParseFailure {
            section: "# Skill Mapping".into(),
            detail: "no skill bullets found".into(),
        });
    }
    Ok(out)
}

fn parse_reasoner(text: &str) -> Result<RecoveryDecisionRaw, OracleError> {
    let from = text.find("```json").map(|i| i + 7);
    let block = match from {
        Some(start) => {
            let rest = &text[start..];
            let end = rest.find("```").unwrap_or(rest.len());
            rest[..end].to_string()
        }
        None => {
            return Err(OracleError::ParseFailure {
                section: "decision json".into(),
                detail: "no ```json block in response".into(),
            })
        }
    };
    serde_json::from_str(&block).map_err(|e| OracleError::ParseFailure {
        section: "decision json".into(),
        detail: e.to_string(),
    })
}

fn parse_classifier_source(text: &str, gen: bool) -> Result<String, OracleError> {
    let header = if gen { "# Predicate Grounding" } else { "# Fixed Code" };
    let body = require_section(text, header)?;
    if body.trim().starts_with("none") {
        return Err(OracleError::ParseFailure {
            section: header.into(),
            detail: "oracle declined to ground the predicate".into(),
        });
    }
    fenced_block(body).ok_or_else(|| OracleError::ParseFailure {
        section: header.into(),
        detail: "no fenced code block".into(),
    })
}

fn parse_plan_lines(text: &str) -> Result<Vec<Action>, OracleError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim().trim_start_matches('-').trim();
        if !line.starts_with('(') || !line.ends_with(')') {
            continue;
        }
        let inner = &line[1..line.len() - 1];
        let mut parts = inner.split_whitespace();
        let Some(op) = parts.next() else { continue };
        out.push(Action::new(op, parts.map(|s| s.to_string()).collect()));
    }
    if out.is_empty() {
        return Err(OracleError::ParseFailure {
            section: "plan".into(),
            detail: "no (action ...) lines in response".into(),
        });
    }
    Ok(out)
}

fn parse_labels(text: &str) -> Result<Vec<(String, bool)>, OracleError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim().trim_start_matches('-').trim();
        let Some(idx) = line.rfind(':') else { continue };
        let atom = line[..idx].trim();
        if !atom.starts_with('(') || !atom.ends_with(')') {
            continue;
        }
        match line[idx + 1..].trim().to_ascii_lowercase().as_str() {
            "true" => out.push((atom.to_string(), true)),
            "false" => out.push((atom.to_string(), false)),
            _ => continue,
        }
    }
    if out.is_empty() {
        return Err(OracleError::ParseFailure {
            section: "labels".into(),
            detail: "no `(atom): true|false` lines in response".into(),
        });
    }
    Ok(out)
}

/// Parse `text` according to the response format of `role`.
pub fn parse_response(role: OracleRole, text: &str) -> Result<OracleReply, OracleError> {
    match role {
        OracleRole::Domain | OracleRole::Decompose => {
            parse_domain_edit(text).map(OracleReply::DomainEdit)
        }
        OracleRole::Translate => parse_translate(text).map(OracleReply::Translate),
        OracleRole::Reasoner => {
            if text.contains("```json") {
                parse_reasoner(text).map(OracleReply::Reasoner)
            } else {
                Ok(OracleReply::Text(text.to_string()))
            }
        }
        OracleRole::ClassifierGen => {
            parse_classifier_source(text, true).map(OracleReply::Classifier)
        }
        OracleRole::ClassifierRefine => {
            parse_classifier_source(text, false).map(OracleReply::Classifier)
        }
        OracleRole::PlanFallback => parse_plan_lines(text).map(OracleReply::Plan),
        OracleRole::PseudoLabel => parse_labels(text).map(OracleReply::Labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::TypedParam;

    const DOMAIN_RESPONSE: &str = r#"### Explanation
The goal is to assemble the lamp.

### Change/Add Action(s)
1. grasp_part: add
    - Description: Robot arm hovers above a part, grasps it by closing the gripper, and lifts it up.
    - PDDL Definition:
    ```pddl
    (:action grasp_part
        :parameters (?r - robot ?p - part ?t - table)
        :precondition (and (not (assembled ?p ?_)) ; part is free to grasp (not already assembled, simplified)
                            )
        :effect (and (holding ?r ?p)
                        (not (on_table ?p ?t))
                        )
    )
    ```

### Change/Add Predicate Definitions
- (holding ?r - robot ?p - part): state. The robot is currently holding the part with its gripper.
- (on_table ?p - part ?t - table): state. The part is resting on the table.
- (aligned ?p1 - part ?p2 - part): state. The held part is aligned with the fixed part for assembly.
- (touching ?p1 - part ?p2 - part): state. The held part is in contact with the fixed part, ready for assembly.

### Change Goal State
(assembled lamp_bulb lamp_base): true
(assembled lamp_hood lamp_base): true
"#;

    #[test]
    fn parses_domain_response_sections() {
        let reply = parse_response(OracleRole::Domain, DOMAIN_RESPONSE).unwrap();
        let OracleReply::DomainEdit(edit) = reply else { panic!("wrong reply kind") };
        assert_eq!(edit.operators.len(), 1);
        assert_eq!(edit.operators[0].name, "grasp_part");
        assert_eq!(edit.operators[0].mode, EditMode::Add);
        assert_eq!(edit.predicates.len(), 4);
        assert_eq!(edit.predicates[0].kind_label, "state");
        assert_eq!(edit.goal_changes.len(), 2);
        assert_eq!(edit.goal_changes[0].atom, "(assembled lamp_bulb lamp_base)");
        assert_eq!(edit.goal_changes[0].value, StateChangeValue::True);
    }

    #[test]
    fn grasp_part_block_parses_to_operator() {
        let reply = parse_response(OracleRole::Domain, DOMAIN_RESPONSE).unwrap();
        let OracleReply::DomainEdit(edit) = reply else { panic!() };
        let op = crate::symbolic::parse_operator_lenient(&edit.operators[0].pddl).unwrap();
        assert_eq!(op.params.len(), 3);
        assert_eq!(op.add_effects.len(), 1);
        assert_eq!(op.add_effects[0].predicate, "holding");
        assert_eq!(op.del_effects.len(), 1);
        assert_eq!(op.del_effects[0].predicate, "on_table");
    }

    #[test]
    fn parses_translate_bullets() {
        let text = "[START OUTLINE]\n# Outline Current State\n- on table\n\
                    # Action Description\n- grasp it\n# Skill Mapping\n\
                    - hover_above_part(p_part)\n- set_gripper_around_part(p_part)\n\
                    - close_gripper()\n- move_linear_up()\n[END OUTLINE]";
        let OracleReply::Translate(items) = parse_response(OracleRole::Translate, text).unwrap()
        else {
            panic!()
        };
        assert_eq!(
            items,
            vec![
                "hover_above_part(p_part)",
                "set_gripper_around_part(p_part)",
                "close_gripper()",
                "move_linear_up()"
            ]
        );
    }

    #[test]
    fn skill_template_binds_params() {
        let op = OperatorDef::new(
            "grasp-part",
            vec![
                TypedParam { name: "r".into(), ty: "robot".into() },
                TypedParam { name: "p".into(), ty: "part".into() },
                TypedParam { name: "t".into(), ty: "table".into() },
            ],
            vec![],
            vec![],
            vec![],
        );
        let template = SkillTemplate::parse("hover_above_part(p_part)", &op).unwrap();
        assert_eq!(template.args, vec![SkillArg::Param("p".into())]);
        let action = Action::new(
            "grasp-part",
            vec!["arm".into(), "lamp_bulb".into(), "table".into()],
        );
        let call = template.bind(&op, &action).unwrap();
        assert_eq!(call.to_string(), "hover_above_part(lamp_bulb)");
        // literals survive verbatim
        let template = SkillTemplate::parse("grab('left_jaw', p_part)", &op).unwrap();
        let call = template.bind(&op, &action).unwrap();
        assert_eq!(call.to_string(), "grab(left_jaw, lamp_bulb)");
    }

    #[test]
    fn parses_reasoner_decision_json() {
        let text = "Reasoning...\n```json\n{\n    \"type_of_fix\": \"pddl-fix\",\n    \"operators\": [\"set-gripper-around-part-lowlevel\"]\n}\n```\n";
        let OracleReply::Reasoner(d) = parse_response(OracleRole::Reasoner, text).unwrap() else {
            panic!()
        };
        assert_eq!(d.type_of_fix, "pddl-fix");
        assert_eq!(d.operators, vec!["set-gripper-around-part-lowlevel"]);
    }

    #[test]
    fn missing_section_is_named() {
        let err = parse_response(OracleRole::Translate, "no mapping here").unwrap_err();
        assert_eq!(
            err,
            OracleError::ParseFailure {
                section: "# Skill Mapping".into(),
                detail: "section missing from response".into()
            }
        );
    }

    #[test]
    fn parses_fixed_code_and_labels() {
        let text = "# Error Analysis\nbad\n# Suggested Fixes\nfix\n# Fixed Code\n```\nf(a) := true\n```\n# Grounder Description\nok";
        let OracleReply::Classifier(src) =
            parse_response(OracleRole::ClassifierRefine, text).unwrap()
        else {
            panic!()
        };
        assert_eq!(src, "f(a) := true");

        let labels = "(on_table lamp_base table): true\n(holding arm lamp_base): false\n";
        let OracleReply::Labels(pairs) = parse_response(OracleRole::PseudoLabel, labels).unwrap()
        else {
            panic!()
        };
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0], ("(on_table lamp_base table)".to_string(), true));
    }
}
