//! Service provider: owns one service, registers it with the FA and hands
//! credentials to eligible edge servers.

use std::collections::BTreeSet;

use super::{unpack_puzzle_material, Outbound, Party};
use crate::blind::BlindKeyPair;
use crate::puzzle::{PuzzleParams, PuzzleTrapdoor};
use crate::symmetric::ServiceKey;
use crate::wire::{Envelope, Message, PartyId, RejectReason, SessionId};
use crate::workload::Workload;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpEvent {
    RegisteredWithFa,
    FaRejected(u8, String),
    EsApproved(String),
    EsRefused(String, RejectReason),
}

#[derive(Debug)]
pub struct ServiceProvider {
    spid: String,
    sname: String,
    service_key: ServiceKey,
    keypair: BlindKeyPair,
    workload: Workload,
    allow: BTreeSet<String>,
    material: Option<(PuzzleParams, PuzzleTrapdoor)>,
    /// ES requests that arrived before the FA acknowledged us.
    pending: Vec<(PartyId, SessionId, String, String)>,
    events: Vec<SpEvent>,
}

impl ServiceProvider {
    pub fn new(
        spid: impl Into<String>,
        sname: impl Into<String>,
        service_key: ServiceKey,
        keypair: BlindKeyPair,
        workload: Workload,
        allow: BTreeSet<String>,
    ) -> Self {
        Self {
            spid: spid.into(),
            sname: sname.into(),
            service_key,
            keypair,
            workload,
            allow,
            material: None,
            pending: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn sname(&self) -> &str {
        &self.sname
    }

    pub fn service_key(&self) -> &ServiceKey {
        &self.service_key
    }

    pub fn events(&self) -> &[SpEvent] {
        &self.events
    }

    pub fn is_registered(&self) -> bool {
        self.material.is_some()
    }

    pub fn register_with_fa(&self) -> Outbound {
        Outbound::new(
            PartyId::Fa,
            [0; 16],
            Message::SpRegister {
                spid: self.spid.clone(),
                sname: self.sname.clone(),
                service_key: self.service_key.0,
                public_key: self.keypair.public.to_bytes(),
                secret_key: self.keypair.secret.to_bytes(),
            },
        )
    }

    fn answer_es(&mut self, to: PartyId, sid: SessionId, esid: String, s_type: String) -> Outbound {
        let refuse = |reason| (reason, format!("ES `{esid}` for `{s_type}`"));
        let verdict = if s_type != self.sname {
            Err(refuse(RejectReason::UnknownService))
        } else if !self.allow.contains(&esid) {
            Err(refuse(RejectReason::NotEligible))
        } else {
            Ok(())
        };
        match verdict {
            Ok(()) => {
                let (params, trapdoor) = self.material.as_ref().expect("only answered once registered");
                self.events.push(SpEvent::EsApproved(esid));
                Outbound::new(
                    to,
                    sid,
                    Message::EsCredentials {
                        status: 0,
                        s_type,
                        service_key: self.service_key.0,
                        public_key: self.keypair.public.to_bytes(),
                        workload: self.workload.to_string(),
                        puzzle_params: params.to_bytes(),
                        trapdoor: trapdoor.to_bytes(),
                    },
                )
            }
            Err((reason, detail)) => {
                self.events.push(SpEvent::EsRefused(esid, reason));
                Outbound::reject(to, sid, reason, detail)
            }
        }
    }
}

impl Party for ServiceProvider {
    fn id(&self) -> PartyId {
        PartyId::Sp(self.spid.clone())
    }

    fn handle(&mut self, from: &PartyId, envelope: Envelope) -> Vec<Outbound> {
        let sid = envelope.session_id;
        match envelope.message {
            Message::Ack { status: 0, detail } if *from == PartyId::Fa => match unpack_puzzle_material(&detail) {
                Ok(material) => {
                    self.material = Some(material);
                    self.events.push(SpEvent::RegisteredWithFa);
                    let pending = std::mem::take(&mut self.pending);
                    pending.into_iter().map(|(to, sid, esid, s_type)| self.answer_es(to, sid, esid, s_type)).collect()
                }
                Err(e) => {
                    self.events.push(SpEvent::FaRejected(RejectReason::Malformed.code(), e.to_string()));
                    Vec::new()
                }
            },
            Message::Ack { status, detail } if *from == PartyId::Fa => {
                self.events.push(SpEvent::FaRejected(status, String::from_utf8_lossy(&detail).into_owned()));
                Vec::new()
            }
            Message::Reject { reason, detail } if *from == PartyId::Fa => {
                self.events.push(SpEvent::FaRejected(reason, detail));
                Vec::new()
            }
            Message::EsRegisterRequest { esid, s_type, .. } => {
                if self.material.is_none() {
                    self.pending.push((from.clone(), sid, esid, s_type));
                    return Vec::new();
                }
                vec![self.answer_es(from.clone(), sid, esid, s_type)]
            }
            other => super::unexpected("SP", from, sid, &other),
        }
    }
}
