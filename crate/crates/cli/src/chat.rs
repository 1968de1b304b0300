//! Line-oriented terminal conversation.

use std::io::{self, BufRead, Write};

use trustconv_core::dialog::DialogSession;

pub const QUIT: &str = "/quit";

/// Runs `session` against `input` until it closes, the respondent types
/// `/quit`, or input ends. Blank lines are ignored.
pub fn run<R: BufRead, W: Write>(session: &mut DialogSession, input: R, mut output: W) -> io::Result<()> {
    writeln!(output, "agent> {}", session.last_agent_turn().text)?;
    let mut lines = input.lines();
    while !session.is_closed() {
        write!(output, "you> ")?;
        output.flush()?;
        let Some(line) = lines.next() else {
            writeln!(output)?;
            break;
        };
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == QUIT {
            break;
        }
        let turn = session.advance(text).map_err(io::Error::other)?;
        writeln!(output, "agent> {}", turn.text)?;
    }
    Ok(())
}
