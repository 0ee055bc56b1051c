//! Operation phrases used by the bundled remedies, plus malformed inputs.

use vsa_core::remedy::{parse_operation, Anchor, Verb};
use vsa_core::OperationAst;

pub const DOCUMENTED: [(&str, Verb, Anchor, &str); 9] = [
    ("add after the drive_task", Verb::Add, Anchor::After, "drive_task"),
    ("modify this_task", Verb::Modify, Anchor::At, "this_task"),
    ("abort at drive_task", Verb::Abort, Anchor::At, "drive_task"),
    ("add after current_drive_task", Verb::Add, Anchor::After, "current_drive_task"),
    ("modify at next_offboard_task", Verb::Modify, Anchor::At, "next_offboard_task"),
    ("add after stop_drive", Verb::Add, Anchor::After, "stop_drive"),
    ("add after new_offboard_task", Verb::Add, Anchor::After, "new_offboard_task"),
    ("add after wait_task", Verb::Add, Anchor::After, "wait_task"),
    ("add after onboard_task", Verb::Add, Anchor::After, "onboard_task"),
];

/// Malformed phrases with the 1-based token position of the error.
pub const MALFORMED: [(&str, usize); 25] = [
    ("", 1),
    ("   ", 1),
    ("frobnicate drive_task", 1),
    ("adds after x", 1),
    ("drive_task add", 1),
    ("add", 2),
    ("add after", 3),
    ("add after the", 4),
    ("add at x", 2),
    ("delete after x", 2),
    ("delete before x", 2),
    ("modify after x", 2),
    ("abort before x", 2),
    ("abort after drive_task", 2),
    ("add after after", 3),
    ("add after add", 3),
    ("modify the the", 3),
    ("add after 9lives", 3),
    ("add after drive-task", 3),
    ("add after drive.task", 3),
    ("delete x y", 3),
    ("abort at x now", 4),
    ("add after x before y", 4),
    ("modify at $x", 3),
    ("abort", 2),
];

pub fn check_documented() -> Result<(), String> {
    for (text, verb, anchor, target) in DOCUMENTED {
        let ast = parse_operation(text).map_err(|e| format!("{text}: {e}"))?;
        if ast != OperationAst::new(verb, anchor, target) {
            return Err(format!("{text}: parsed as {ast:?}"));
        }
        if parse_operation(&ast.to_string()).ok().as_ref() != Some(&ast) {
            return Err(format!("{text}: rendering {ast} does not re-parse"));
        }
    }
    Ok(())
}

pub fn check_malformed() -> Result<(), String> {
    for (text, position) in MALFORMED {
        match parse_operation(text) {
            Ok(ast) => return Err(format!("{text:?} parsed as {ast:?}")),
            Err(e) if e.position != position => {
                return Err(format!("{text:?}: position {} expected {position}: {}", e.position, e.message))
            }
            Err(e) if e.message.is_empty() => return Err(format!("{text:?}: empty message")),
            Err(_) => {}
        }
    }
    Ok(())
}
