//! Prompt assembly for every oracle role. Output is a pure function of the
//! context, so prompts are byte-stable and replay digests match across runs.

use super::{Message, OracleError, OracleRole};

/// Everything a prompt may draw on. Each role validates its own required
/// fields and ignores the rest.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    pub instruction: Option<String>,
    pub domain_knowledge: Option<String>,
    /// Rendered predicate list: `- (name ?a - t): state|other. description`
    pub predicates: Option<String>,
    /// Rendered current operator definitions (may be empty for a fresh run).
    pub actions: Option<String>,
    /// `child - parent` type lines, space separated.
    pub types: Option<String>,
    /// `name - type` object listing.
    pub objects: Option<String>,
    /// `- def name(arg: str, ...):` skill listing.
    pub skills: Option<String>,
    pub init_state: Option<String>,
    pub goal_state: Option<String>,
    /// For decomposition: the ground action, e.g. `(grasp-part arm lamp_bulb table)`.
    pub high_level_action: Option<String>,
    /// The PDDL block of the operator under discussion.
    pub operator_block: Option<String>,
    /// Skill sequence proposed by the translation role.
    pub suggested_skills: Option<String>,
    /// Verification failure summary appended to repair re-prompts.
    pub failure_summary: Option<String>,
    pub state_before: Option<String>,
    pub decomposition_hierarchy: Option<String>,
    pub executed_skill: Option<String>,
    pub expected_change: Option<String>,
    pub observed_change: Option<String>,
    /// Canonical domain plus problem text for plan fallback requests.
    pub plan_request: Option<String>,
    /// Accessor listing available to classifier bodies.
    pub classifier_api: Option<String>,
    pub existing_classifiers: Option<String>,
    /// Declaration plus description of the predicate to ground.
    pub predicate_decl: Option<String>,
    pub current_classifier: Option<String>,
    pub mismatch_report: Option<String>,
    pub pose_dump: Option<String>,
    pub candidate_atoms: Option<String>,
    /// Compacted learning history for the reasoner.
    pub history: Option<String>,
    /// Second reasoner stage: ask for the machine-readable decision.
    pub decision_request: bool,
}

fn need<'a>(field: &'a Option<String>, name: &str) -> Result<&'a str, OracleError> {
    match field {
        Some(s) if !s.trim().is_empty() => Ok(s.as_str()),
        _ => Err(OracleError::MissingContextField(name.to_string())),
    }
}

fn opt(field: &Option<String>) -> &str {
    field.as_deref().unwrap_or("")
}

const DOMAIN_SYSTEM: &str = r#"You are a planning expert tasked with developing a world model for planning based on a user instruction.

---

<!-- when generating content for the sections listed below, follow the specified format exactly. You can leaf out sections you don't need. -->
### Explanation
<!-- task specific explanation and chain-of-thought reasoning -->

### Change/Add Action(s)
1. {action-name-1}: {(add|edit|delete)}
    - Description: {description what happens during the action}
    - PDDL Definition:
        ```pddl
        (:action {pddl_action_name}
            :parameters {pddl_action_parameters}
            :precondition {pddl_action_preconds}
            :effect {pddl_action_effects}
        )
        ```

### Change/Add Predicate Definitions
<!-- `state` predicates describe the current situation of objects in the world. Their description must specify the conditions under which they hold, so a classifier can later decide from perception data (e.g., 6D poses) whether the predicate is true.-->
- ({predicate_name} {predicate_args...}): {state|other}. {predicate_description}

### Change Initial State
<!-- add predicates that should be changed, without text, leave 'None' if no change -->
{predicate_4}: {true|false|remove}

### Change Goal State
<!-- add predicates that should be changed, without text, leave 'None' if no change -->
{predicate_7}: {true|false|remove}
"#;

/// Assemble the message list for `role` from `ctx`. Byte-stable for
/// identical context.
pub fn build_prompt(role: OracleRole, ctx: &PromptContext) -> Result<Vec<Message>, OracleError> {
    match role {
        OracleRole::Domain => {
            let instruction = need(&ctx.instruction, "instruction")?;
            let skills = need(&ctx.skills, "skills")?;
            let objects = need(&ctx.objects, "objects")?;
            let mut user = format!(
                "### User Instruction\n{instruction}\n\n### Domain Knowledge\n{knowledge}\n\n\
                 ### Predicates\n{predicates}\n\n### Actions\n{actions}\n\n### Types\n{types}\n\n\
                 ### Objects\n{objects}\n\n### Skill Library\n{skills}\n\n### Initial State\n{init}\n",
                instruction = instruction,
                knowledge = opt(&ctx.domain_knowledge),
                predicates = opt(&ctx.predicates),
                actions = opt(&ctx.actions),
                types = opt(&ctx.types),
                objects = objects,
                skills = skills,
                init = opt(&ctx.init_state),
            );
            if let Some(failure) = &ctx.failure_summary {
                user.push_str(&format!("\n### Verification Failure\n{}\n", failure));
            }
            user.push_str(
                "\n### Your Task\n\
                 1. Define the goal: Based on the user instruction, create a PDDL goal that reflects the objective the user wants to accomplish.\n\
                 2. List of predicates: Inspect the predicates that will be used to describe the state of the world and the relationships between entities in the domain.\n\
                 3. Define actions:\n\
                 \x20   - Based on the goal and available skills in the skill library, define a set of PDDL actions that enable planning toward the goal.\n\
                 \x20   - Preferably define high-level actions that abstract over one or more low-level skills to support hierarchical planning, but don't add object specific actions.\n\
                 \x20   - Each PDDL action should have a clear and descriptive name, a general-purpose description, and a PDDL definition.\n\
                 \x20   - Avoid unnecessary actions - only include those essential to achieving the goal.\n",
            );
            Ok(vec![Message::system(DOMAIN_SYSTEM), Message::user(user)])
        }
        OracleRole::Translate => {
            let skills = need(&ctx.skills, "skills")?;
            let objects = need(&ctx.objects, "objects")?;
            let operator = need(&ctx.operator_block, "operator_block")?;
            let user = format!(
                "### Predefined Skills\n```python\n{skills}```\n\n### Objects\n{objects}\n\n\
                 ### Predicate Definitions\n{predicates}\n\n### PDDL Action Definition\n{operator}\n\
                 ### Task\nThe current state fulfills the PDDL action's preconditions. Your task is to \
                 propose a sequence of predefined skills to reach the effect of the PDDL action.\n\n\
                 Here is an outline of what your response should look like:\n\
                 [START OUTLINE]\n\
                 # Outline Current State\n\
                 [given the action preconditions, outline the current state]\n\
                 # Action Description\n\
                 [insert your analysis what the PDDL action is trying to achieve based on the current state and the effects that must be reached]\n\
                 # Skill Mapping\n\
                 [insert a bullet list of predefined skills as '<function_name>(<arg1>, <arg2>, ...)' that, starting from the current state, reach the effects. Don't include skills to `confirm` the preconditions. Use variables named '<param>_<type>' to reference pddl parameters, or strings if you need additional arguments where no pddl parameter exists]\n\
                 [END OUTLINE]\n",
                skills = skills,
                objects = objects,
                predicates = opt(&ctx.predicates),
                operator = operator,
            );
            Ok(vec![Message::user(user)])
        }
        OracleRole::Decompose => {
            let action = need(&ctx.high_level_action, "high_level_action")?;
            let operator = need(&ctx.operator_block, "operator_block")?;
            let skills = need(&ctx.skills, "skills")?;
            let mut user = format!(
                "You are given a high-level PDDL action and supporting context. Your task is to \
                 decompose this high-level action into a set of meaningful, lower-level PDDL actions \
                 that result in the same effect.\n\n\
                 ### High-level Action `{action}`\n{operator}\n\
                 ### Predicates\n{predicates}\n\n### Actions\n{actions}\n\n### Types\n{types}\n\n\
                 ### Objects\n{objects}\n\n### Initial State\n{init}\n\n### Goal State\n{goal}\n\n\
                 ### Skill Library\n{skills}\n\n### Suggested Decomposition\n```pddl\n{suggested}```\n",
                action = action,
                operator = operator,
                predicates = opt(&ctx.predicates),
                actions = opt(&ctx.actions),
                types = opt(&ctx.types),
                objects = opt(&ctx.objects),
                init = opt(&ctx.init_state),
                goal = opt(&ctx.goal_state),
                skills = skills,
                suggested = opt(&ctx.suggested_skills),
            );
            if let Some(failure) = &ctx.failure_summary {
                user.push_str(&format!("\n### Verification Failure\n{}\n", failure));
            }
            user.push_str(
                "\n---\n\n### Instructions\n\
                 Follow the steps below to complete the decomposition:\n\
                 1. Describe the Initial State\n\
                 2. Understand the High-Level Action: Examine the :precondition and :effect. Identify what state change it induces.\n\
                 3. Define Lower-Level Actions (add new predicates if necessary): Construct new actions that together implement the high-level action.\n\
                 \x20   - Refer to the suggested decomposition for a proposed skill sequence. Your actions should cover the skill sequence.\n\
                 \x20   - Only include actions that result in a state change and are not already defined below # Actions.\n\
                 \x20   - Do not include meta-actions like confirm, complete, sense, or computation-related steps.\n\
                 \x20   - Construct new predicates that are required to capture the necessary conditions and effects of the lower-level actions.\n\
                 \x20   - Define individual PDDL actions for each skill you intend to use.\n\
                 4. Specify the Goal State: List the predicates that reflect the intended outcome of the high-level action.\n",
            );
            Ok(vec![Message::system(DOMAIN_SYSTEM), Message::user(user)])
        }
        OracleRole::Reasoner => {
            if ctx.decision_request {
                let action = need(&ctx.high_level_action, "high_level_action")?;
                let user = format!(
                    "Determine the most probable fix type based on the following options:\n\
                     - one of the action definitions listed in `decomposition hierarchy` must be corrected: 'pddl-fix'\n\
                     - some skills should be executed before the action: 'prior-skills': list them under \"skills\"\n\
                     - the skill was incorrectly instantiated or used: 'incorrect-instantiation'\n\
                     - alternatively, the pddl action {action} should be implemented with multiple skills: 'multiple-skills'\n\n\
                     Independent of the chosen fix type, list ALL operators that must be edited to resolve the issue. \
                     If multiple operators must be changed, list them comma-separated ([op1, op2, ...]).\n\n\
                     Output Format:\n\
                     ```json\n\
                     {{\n\
                     \x20   \"type_of_fix\": \"<chosen-fix-type>\",\n\
                     \x20   \"operators\": [\"<corrected-action>\", \"...\"]\n\
                     }}\n\
                     ```\n",
                    action = action,
                );
                return Ok(vec![Message::user(user)]);
            }
            let state_before = need(&ctx.state_before, "state_before")?;
            let hierarchy = need(&ctx.decomposition_hierarchy, "decomposition_hierarchy")?;
            let operator = need(&ctx.operator_block, "operator_block")?;
            let skill = need(&ctx.executed_skill, "executed_skill")?;
            let user = format!(
                "You are given a decomposition hierarchy and a record of skills executed in a \
                 simulated environment. The last skill has failed during execution. Your goal is to \
                 identify why the observed effect of the simulation diverged from the expected \
                 effect of that skill. The simulation and skill implementations are correct and \
                 fixed - you cannot modify them. Your focus is on reasoning about the planning \
                 model and its action decomposition.\n\n---\n\n\
                 ### Context:\n{knowledge}\n\n\
                 ### Learning History\n{history}\n\n\
                 State before {action}:\n{state_before}\n\n\
                 Decomposition Hierarchy\n{hierarchy}\n\n\
                 Current Operator\n{operator}\n\
                 Executed Skill for PDDL Action {action}:\n{skill}\n\n\
                 Execution Failure:\n\
                 Expected Change:\n{expected}\n\
                 Ground Truth Change:\n{observed}\n\n---\n\n\
                 Your Task:\n\
                 1. Summarize the state before executing the failed action.\n\
                 2. How did the environment change by executing {skill_short}.\n\
                 3. Identify the cause of the deviation and how the planning model must change to realign it with the ground truth change.\n",
                knowledge = opt(&ctx.domain_knowledge),
                history = opt(&ctx.history),
                action = opt(&ctx.high_level_action),
                state_before = state_before,
                hierarchy = hierarchy,
                operator = operator,
                skill = skill,
                expected = opt(&ctx.expected_change),
                observed = opt(&ctx.observed_change),
                skill_short = skill,
            );
            Ok(vec![Message::user(user)])
        }
        OracleRole::PlanFallback => {
            let request = need(&ctx.plan_request, "plan_request")?;
            let user = format!(
                "The classical planner could not solve the following planning problem. Propose a \
                 plan directly. The plan does not have to be provably valid under the domain, but \
                 it should plausibly achieve the goal in the real environment.\n\n{request}\n\
                 Respond with one action per line in the form (action_name object1 object2 ...), \
                 and no other parenthesized text.\n",
                request = request,
            );
            Ok(vec![Message::user(user)])
        }
        OracleRole::ClassifierGen => {
            let api = need(&ctx.classifier_api, "classifier_api")?;
            let decl = need(&ctx.predicate_decl, "predicate_decl")?;
            let user = format!(
                "Domain Knowledge:\n{knowledge}\n\n\
                 Available accessors:\n```\n{api}```\n\n\
                 Already defined classifiers:\n```\n{existing}```\n\n\
                 Predicate: {decl}\n\n\
                 Can you write the classifier expression that implements the grounding of this \
                 predicate?\n\
                 You must define hyperparameters or constants with default values in braces after \
                 the parameter list, e.g. `name(a, b){{tol=0.05}} := ...`.\n\
                 Where possible, use the already defined classifiers to reduce duplication.\n\
                 Your response should contain two sections\n\
                 [START OUTLINE]\n\
                 # Requirements to Check\n\
                 [list all requirements the function must validate. Only include checks that can be performed with the provided context (skip/ignore others).]\n\
                 # Predicate Grounding\n\
                 [insert the classifier expression enclosed in ``` ```. If you think the predicate cannot be grounded reliably with the provided context, return `none` and no code.]\n\
                 # Grounder Description\n\
                 [insert a description what the grounder tests for. It should be short but complete.]\n\
                 [END OUTLINE]\n",
                knowledge = opt(&ctx.domain_knowledge),
                api = api,
                existing = opt(&ctx.existing_classifiers),
                decl = decl,
            );
            Ok(vec![Message::user(user)])
        }
        OracleRole::ClassifierRefine => {
            let current = need(&ctx.current_classifier, "current_classifier")?;
            let report = need(&ctx.mismatch_report, "mismatch_report")?;
            let user = format!(
                "{knowledge}\n\n\
                 Available accessors:\n```\n{api}```\n\n\
                 Current classifier:\n```\n{current}\n```\n\n\
                 This expression grounds the PDDL predicate. However, we evaluated it against a \
                 dataset labeled by a grounding oracle and found following errors:\n{report}\n\
                 Your response should contain three sections\n\
                 [START OUTLINE]\n\
                 # Error Analysis\n\
                 [evaluate the errors by tracing the values and result in the expression.]\n\
                 # Suggested Fixes\n\
                 [list all checks that contributed to the error. For every one of them, verify they are required given information about the predicate. Consider also new checks that should be implemented.]\n\
                 # Fixed Code\n\
                 [insert your suggested changes and output the updated classifier expression enclosed in ``` ```. The fixes should correct the expression to fix as many errors as possible while not violating the predicate definition and description.]\n\
                 # Grounder Description\n\
                 [insert a description what the grounder tests for. It should be short but complete.]\n\
                 [END OUTLINE]\n",
                knowledge = opt(&ctx.domain_knowledge),
                api = opt(&ctx.classifier_api),
                current = current,
                report = report,
            );
            Ok(vec![Message::user(user)])
        }
        OracleRole::PseudoLabel => {
            let dump = need(&ctx.pose_dump, "pose_dump")?;
            let atoms = need(&ctx.candidate_atoms, "candidate_atoms")?;
            let user = format!(
                "Pose estimation of all objects and the robot gripper (3D poses are in meters):\n\
                 {dump}\n\
                 Predicates:\n{predicates}\n\
                 For every atom below, decide whether it holds in the shown state.\n\
                 {atoms}\n\
                 Respond with one line per atom in the form `(predicate obj1 obj2): true|false` \
                 and nothing else.\n",
                dump = dump,
                predicates = opt(&ctx.predicates),
                atoms = atoms,
            );
            Ok(vec![Message::user(user)])
        }
    }
}
