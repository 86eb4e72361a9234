//! Prompt and answer text templates.

use crate::coordsys::{NormBox, NormPoint};
use crate::markup::{render_boxes, render_points};

/// Judge prompt; `{task_instruction}` is substituted.
pub const JUDGE_PROMPT: &str = include_str!("../templates/judge_prompt.txt");

/// Model-usage prompt for affordance generation; `{Task Instruction}` is substituted.
pub const USAGE_AFFORDANCE: &str = "You are currently a robot performing robotic manipulation tasks. Your task instruction: {Task Instruction} . Observe the image, use 2D points and bounding box to mark the target location where the manipulated object will be moved. In your answer, use <box>[[x1, y1, x2, y2]]</box> to present the bounding box of the target region, and use <point>[[x1, y1], [x2, y2], ...]</point> to mark the points of the free space.";

/// Model-usage prompt for visual trace generation; `{Task Instruction}` is substituted.
pub const USAGE_TRACE: &str = "You are currently a robot performing robotic manipulation tasks. Your task instruction: {Task Instruction}. Observe the image, use 2D points to mark the manipulated object-centric waypoints to guide the robot to manipulate the object.Typically, the waypoints consists of an ordered sequence of eight 2D points. The format is <point>[[x1, y1], [x2, y2], ...]</point>.";

const ROBOT_PREFIX: &str = "You are currently a robot performing robotic manipulation tasks. Your task instruction: ";
const OBSERVE: &str = ". Observe the image";

const LEVEL4_TAIL: &str = ". Observe the image, use 2D points and bounding box to mark the target location where the manipulated object will be moved. In your answer, use <box>[[x1, y1, x2, y2]]</box> to present the bounding box of the target region, and use <point>[[x1, y1], [x2, y2], ...]</point> to mark the points of the free space.";

const LEVEL5_TAIL: &str = ". Observe the image, use 2D points to mark the manipulated object-centric waypoints to guide the robot to manipulate the object. Typically, the waypoints consist of an ordered sequence of eight 2D points. The format is <point>[[x1, y1], [x2, y2], ...]</point>.";

const INVERSE_PREFIX: &str =
    "You are currently a robot performing robotic manipulation tasks. Observe the image and the following visual aid: ";
const INVERSE_TAIL: &str = " What task instruction does this visual aid accomplish?";

pub const LEVEL2_PROMPT: &str =
    "Tell me about the items in your view and their relationships to each other. Answer the question with scene graph.";

pub fn judge_prompt(instruction: &str) -> String {
    JUDGE_PROMPT.replace("{task_instruction}", instruction)
}

pub fn usage_affordance_prompt(instruction: &str) -> String {
    USAGE_AFFORDANCE.replace("{Task Instruction}", instruction)
}

pub fn usage_trace_prompt(instruction: &str) -> String {
    USAGE_TRACE.replace("{Task Instruction}", instruction)
}

fn clean_instruction(instruction: &str) -> &str {
    let s = instruction.trim();
    s.strip_suffix('.').unwrap_or(s).trim_end()
}

/// Dataset prompt for affordance samples.
pub fn level4_prompt(instruction: &str) -> String {
    format!("{ROBOT_PREFIX}{}{LEVEL4_TAIL}", clean_instruction(instruction))
}

/// Dataset prompt for visual trace samples.
pub fn level5_prompt(instruction: &str) -> String {
    format!("{ROBOT_PREFIX}{}{LEVEL5_TAIL}", clean_instruction(instruction))
}

/// Instruction embedded in a level 4 or level 5 dataset prompt.
pub fn instruction_from_prompt(prompt: &str) -> Option<&str> {
    let rest = prompt.strip_prefix(ROBOT_PREFIX)?;
    let end = rest.rfind(OBSERVE)?;
    Some(&rest[..end])
}

pub fn level4_answer(b: &NormBox, points: &[NormPoint]) -> String {
    format!(
        "<Answer>The target position is {}. The new position can also be roughly defined by the following points: {}.</Answer>",
        render_boxes(std::slice::from_ref(b)),
        render_points(points)
    )
}

pub fn level5_answer(points: &[NormPoint]) -> String {
    format!("<Answer>The visual trace is {}.</Answer>", render_points(points))
}

pub fn inverse_prompt(aid: &str) -> String {
    format!("{INVERSE_PREFIX}{aid}{INVERSE_TAIL}")
}

/// Visual-aid text embedded in an inverse prompt.
pub fn aid_from_inverse_prompt(prompt: &str) -> Option<&str> {
    prompt.strip_prefix(INVERSE_PREFIX)?.strip_suffix(INVERSE_TAIL)
}
