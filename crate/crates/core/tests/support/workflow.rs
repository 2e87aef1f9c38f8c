//! Exhaustive (document status, transaction kind, author role) matrix for a
//! single purchase request, compared against a hand-written table.

use pams_core::payload::{Payload, ReceivedLine, Role, TxKind, Verdict};
use pams_core::state::{apply_tx, State};
use pams_core::testkit::{quotes_for, two_lines, Workflow};
use pams_core::{sha3_512, Digest, Transaction};

/// Reachable configurations of one purchase request and its documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    NoRequest,
    Submitted,
    Canvassing,
    Canvassed,
    Ordered,
    AwaitingInspection,
    InspectionFailed,
    InspectionPassed,
    Closed,
    RejectedEarly,
    RejectedCanvassed,
}

pub const STAGES: [Stage; 11] = [
    Stage::NoRequest,
    Stage::Submitted,
    Stage::Canvassing,
    Stage::Canvassed,
    Stage::Ordered,
    Stage::AwaitingInspection,
    Stage::InspectionFailed,
    Stage::InspectionPassed,
    Stage::Closed,
    Stage::RejectedEarly,
    Stage::RejectedCanvassed,
];

pub const KINDS: [TxKind; 9] = [
    TxKind::SubmitPr,
    TxKind::OpenCanvass,
    TxKind::SubmitAoc,
    TxKind::IssuePo,
    TxKind::RecordDelivery,
    TxKind::RecordInspection,
    TxKind::ClosePo,
    TxKind::RejectPr,
    TxKind::RegisterAsset,
];

/// One user per role, each holding only that role.
pub const ACTORS: [(&str, Role); 5] = [
    ("emp", Role::Employee),
    ("canv", Role::Canvasser),
    ("insp", Role::Inspector),
    ("cust", Role::PropertyCustodian),
    ("admin", Role::Administrator),
];

fn required(kind: TxKind) -> Role {
    use TxKind::*;
    match kind {
        SubmitPr => Role::Employee,
        OpenCanvass | SubmitAoc | IssuePo => Role::Canvasser,
        RecordInspection => Role::Inspector,
        RecordDelivery | ClosePo | RegisterAsset => Role::PropertyCustodian,
        RejectPr => Role::Administrator,
        other => panic!("{other} is outside the matrix"),
    }
}

/// Expected outcome for an author holding the right role: `None` means
/// success, otherwise the error code.
fn expected(stage: Stage, kind: TxKind) -> Option<&'static str> {
    use Stage::*;
    const OK: Option<&str> = None;
    const UNKNOWN: Option<&str> = Some("UnknownReference");
    const TRANSITION: Option<&str> = Some("InvalidTransition");
    let has_pr = stage != NoRequest;
    let has_aoc = matches!(
        stage,
        Canvassed | Ordered | AwaitingInspection | InspectionFailed | InspectionPassed | Closed | RejectedCanvassed
    );
    let has_po = matches!(stage, Ordered | AwaitingInspection | InspectionFailed | InspectionPassed | Closed);
    let has_dc = matches!(stage, AwaitingInspection | InspectionFailed | InspectionPassed | Closed);
    match kind {
        TxKind::SubmitPr => OK,
        TxKind::OpenCanvass if !has_pr => UNKNOWN,
        TxKind::OpenCanvass => if stage == Submitted { OK } else { TRANSITION },
        TxKind::SubmitAoc if !has_pr => UNKNOWN,
        TxKind::SubmitAoc => if stage == Canvassing { OK } else { TRANSITION },
        TxKind::IssuePo if !has_aoc => UNKNOWN,
        TxKind::IssuePo => if stage == Canvassed { OK } else { TRANSITION },
        TxKind::RecordDelivery if !has_po => UNKNOWN,
        TxKind::RecordDelivery => if matches!(stage, Ordered | InspectionFailed) { OK } else { TRANSITION },
        TxKind::RecordInspection if !has_dc => UNKNOWN,
        TxKind::RecordInspection => if stage == AwaitingInspection { OK } else { TRANSITION },
        TxKind::ClosePo if !has_po => UNKNOWN,
        TxKind::ClosePo => if stage == InspectionPassed { OK } else { TRANSITION },
        TxKind::RejectPr if !has_pr => UNKNOWN,
        TxKind::RejectPr => if matches!(stage, Submitted | Canvassing | Canvassed) { OK } else { TRANSITION },
        TxKind::RegisterAsset if !has_po => UNKNOWN,
        TxKind::RegisterAsset => {
            if matches!(stage, InspectionPassed | Closed) { OK } else { Some("InspectionNotPassed") }
        }
        other => panic!("{other} is outside the matrix"),
    }
}

struct Fixture {
    wf: Workflow,
    pr: Option<Digest>,
    aoc: Option<Digest>,
    po: Option<Digest>,
    dc: Option<Digest>,
}

fn reach(stage: Stage) -> Fixture {
    use Stage::*;
    let mut wf = Workflow::new();
    let mut ids = (None, None, None, None);
    let order = [Submitted, Canvassing, Canvassed, Ordered, AwaitingInspection];
    let depth = match stage {
        NoRequest => 0,
        Submitted | RejectedEarly => 1,
        Canvassing => 2,
        Canvassed | RejectedCanvassed => 3,
        Ordered => 4,
        _ => 5,
    };
    for step in &order[..depth] {
        match step {
            Submitted => {
                wf.submit_pr();
                ids.0 = Some(wf.pr_id());
            }
            Canvassing => wf.open_canvass(),
            Canvassed => {
                wf.submit_aoc();
                ids.1 = Some(wf.aoc_id());
            }
            Ordered => {
                wf.issue_po();
                ids.2 = Some(wf.po_id());
            }
            AwaitingInspection => {
                wf.record_delivery(&[2, 1]);
                ids.3 = Some(wf.dc_id());
            }
            _ => unreachable!(),
        }
    }
    match stage {
        RejectedEarly | RejectedCanvassed => {
            let pr_id = wf.pr_id();
            wf.apply_as("admin", Payload::RejectPr { pr_id, reason: "not needed".into() });
        }
        InspectionFailed => wf.record_inspection(false),
        InspectionPassed => wf.record_inspection(true),
        Closed => {
            wf.record_inspection(true);
            wf.close_po();
        }
        _ => {}
    }
    Fixture { wf, pr: ids.0, aoc: ids.1, po: ids.2, dc: ids.3 }
}

/// A well-formed payload of `kind` aimed at the fixture's documents, or at
/// an unknown id where the document does not exist yet.
fn payload_for(f: &Fixture, kind: TxKind) -> Payload {
    let missing = sha3_512(b"no such document");
    let pr_id = f.pr.unwrap_or(missing);
    match kind {
        TxKind::SubmitPr => Payload::SubmitPr { lines: two_lines() },
        TxKind::OpenCanvass => Payload::OpenCanvass { pr_id },
        TxKind::SubmitAoc => Payload::SubmitAoc { pr_id, quotes: quotes_for(2), winner_index: 1 },
        TxKind::IssuePo => Payload::IssuePo { aoc_id: f.aoc.unwrap_or(missing) },
        TxKind::RecordDelivery => Payload::RecordDelivery {
            po_id: f.po.unwrap_or(missing),
            lines: vec![
                ReceivedLine { received: 2, remarks: String::new() },
                ReceivedLine { received: 1, remarks: String::new() },
            ],
        },
        TxKind::RecordInspection => Payload::RecordInspection {
            dc_id: f.dc.unwrap_or(missing),
            verdicts: vec![Verdict::Pass, Verdict::Pass],
        },
        TxKind::ClosePo => Payload::ClosePo { po_id: f.po.unwrap_or(missing) },
        TxKind::RejectPr => Payload::RejectPr { pr_id, reason: "duplicate".into() },
        TxKind::RegisterAsset => Payload::RegisterAsset {
            asset_uid: "PPE-0001".into(),
            description: "Laptop".into(),
            po_id: f.po.unwrap_or(missing),
            line_index: 0,
        },
        other => panic!("{other} is outside the matrix"),
    }
}

#[derive(Debug, Default)]
pub struct MatrixReport {
    pub cases: usize,
    pub successes: usize,
    pub mismatches: Vec<String>,
}

pub fn run_matrix() -> MatrixReport {
    let mut report = MatrixReport::default();
    for stage in STAGES {
        let fixture = reach(stage);
        let before: &State = &fixture.wf.state;
        let before_hash = before.state_hash();
        for kind in KINDS {
            let payload = payload_for(&fixture, kind);
            for (user, role) in ACTORS {
                report.cases += 1;
                let tx = Transaction::new(&payload, user, 1_800_000_000);
                let want = if role == required(kind) {
                    expected(stage, kind)
                } else {
                    Some("RoleForbidden")
                };
                let got = apply_tx(before, &tx);
                let got_code = got.as_ref().err().map(|e| e.code());
                if got.is_ok() {
                    report.successes += 1;
                }
                if got_code != want {
                    report.mismatches.push(format!(
                        "{stage:?} {kind} as {user}: expected {}, got {}",
                        want.unwrap_or("ok"),
                        got_code.unwrap_or("ok")
                    ));
                }
                if before.state_hash() != before_hash {
                    report.mismatches.push(format!("{stage:?} {kind} as {user}: input state mutated"));
                }
            }
        }
    }
    report
}
