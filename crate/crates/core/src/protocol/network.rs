//! In-process mailbox. Messages are delivered in send order; every send is
//! logged before its edge is checked, so a rejected message still shows up
//! in the transcript for the auditor.

use std::collections::VecDeque;

use super::{edge_allowed, Message, Payload, PayloadKind, Role, Transcript};
use crate::{Error, Result};

#[derive(Debug, Default)]
pub struct Network {
    round: u64,
    queue: VecDeque<Message>,
    transcript: Transcript,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin_round(&mut self, round: u64) -> Result<()> {
        self.ensure_drained()?;
        self.round = round;
        Ok(())
    }

    pub fn send(&mut self, sender: Role, receiver: Role, kind: PayloadKind, payload: Payload, perturbed: bool) -> Result<()> {
        let msg = Message {
            round: self.round,
            sender,
            receiver,
            kind,
            payload,
            perturbed,
        };
        self.transcript.push(msg.record());
        if !edge_allowed(sender, receiver, kind) {
            return Err(Error::ProtocolViolation(format!(
                "{kind:?} may not travel {sender} → {receiver}"
            )));
        }
        self.queue.push_back(msg);
        Ok(())
    }

    /// Takes the oldest pending message matching all three keys.
    pub fn recv(&mut self, receiver: Role, sender: Role, kind: PayloadKind) -> Result<Message> {
        let pos = self
            .queue
            .iter()
            .position(|m| m.receiver == receiver && m.sender == sender && m.kind == kind)
            .ok_or_else(|| {
                Error::Protocol(format!("{receiver} has no pending {kind:?} from {sender}"))
            })?;
        Ok(self.queue.remove(pos).expect("position is in range"))
    }

    pub fn ensure_drained(&self) -> Result<()> {
        match self.queue.front() {
            Some(m) => Err(Error::Protocol(format!(
                "{} undelivered message(s), first {:?} {} → {}",
                self.queue.len(),
                m.kind,
                m.sender,
                m.receiver
            ))),
            None => Ok(()),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn take_transcript(&mut self) -> Transcript {
        std::mem::take(&mut self.transcript)
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}
