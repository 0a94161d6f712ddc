//! Translation between wire [`Command`]s and device commands.
//!
//! | name       | args                  |
//! |------------|-----------------------|
//! | `move_to`  | `col`: integer        |
//! | `dock`     |                       |
//! | `engage`   |                       |
//! | `release`  |                       |
//! | `goto_row` | `row`: integer or `"exit"` |
//! | `lock`     |                       |
//! | `unlock`   |                       |

use serde_json::json;

use super::{ElevatorCommand, MoverCommand, Stop};
use crate::protocol::{Args, Command};
use crate::sim::Action;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error("unknown command `{0}`")]
    Unknown(String),
    #[error("command `{name}` needs argument `{arg}`")]
    MissingArg { name: String, arg: &'static str },
}

pub fn mover_command(cmd: &Command) -> Result<MoverCommand, CommandError> {
    match cmd.name.as_str() {
        "move_to" => {
            let col = cmd.arg_u32("col").ok_or(CommandError::MissingArg { name: cmd.name.clone(), arg: "col" })?;
            Ok(MoverCommand::MoveTo { col })
        }
        "dock" => Ok(MoverCommand::Dock),
        "engage" => Ok(MoverCommand::Engage),
        "release" => Ok(MoverCommand::Release),
        other => Err(CommandError::Unknown(other.to_string())),
    }
}

pub fn elevator_command(cmd: &Command) -> Result<ElevatorCommand, CommandError> {
    match cmd.name.as_str() {
        "goto_row" => {
            let stop = if cmd.arg_str("row") == Some("exit") {
                Stop::Exit
            } else {
                Stop::Row(cmd.arg_u32("row").ok_or(CommandError::MissingArg { name: cmd.name.clone(), arg: "row" })?)
            };
            Ok(ElevatorCommand::GotoRow { stop })
        }
        "lock" => Ok(ElevatorCommand::Lock),
        "unlock" => Ok(ElevatorCommand::Unlock),
        other => Err(CommandError::Unknown(other.to_string())),
    }
}

/// Wire name and arguments for a planned action.
pub fn action_parts(action: &Action) -> (&'static str, Args) {
    let mut args = Args::new();
    let name = match action {
        Action::Mover(MoverCommand::MoveTo { col }) => {
            args.insert("col".into(), json!(col));
            "move_to"
        }
        Action::Mover(MoverCommand::Dock) => "dock",
        Action::Mover(MoverCommand::Engage) => "engage",
        Action::Mover(MoverCommand::Release) => "release",
        Action::Elevator(ElevatorCommand::GotoRow { stop }) => {
            let row = match stop {
                Stop::Exit => json!("exit"),
                Stop::Row(r) => json!(r),
            };
            args.insert("row".into(), row);
            "goto_row"
        }
        Action::Elevator(ElevatorCommand::Lock) => "lock",
        Action::Elevator(ElevatorCommand::Unlock) => "unlock",
        Action::Elevator(ElevatorCommand::Board { .. }) => "board",
        Action::Elevator(ElevatorCommand::Alight) => "alight",
    };
    (name, args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wire(action: &Action) -> Command {
        let (name, args) = action_parts(action);
        Command { command_id: "x".into(), device_id: "d".into(), name: name.into(), args }
    }

    #[test]
    fn actions_round_trip() {
        for m in [MoverCommand::MoveTo { col: 3 }, MoverCommand::Dock, MoverCommand::Engage, MoverCommand::Release] {
            assert_eq!(mover_command(&wire(&Action::Mover(m.clone()))).unwrap(), m);
        }
        for e in [
            ElevatorCommand::GotoRow { stop: Stop::Exit },
            ElevatorCommand::GotoRow { stop: Stop::Row(1) },
            ElevatorCommand::Lock,
            ElevatorCommand::Unlock,
        ] {
            assert_eq!(elevator_command(&wire(&Action::Elevator(e.clone()))).unwrap(), e);
        }
    }

    #[test]
    fn missing_and_unknown() {
        let mut c = wire(&Action::Mover(MoverCommand::MoveTo { col: 1 }));
        c.args.clear();
        assert!(matches!(mover_command(&c), Err(CommandError::MissingArg { arg: "col", .. })));
        c.name = "fly".into();
        assert!(matches!(mover_command(&c), Err(CommandError::Unknown(_))));
    }
}
