//! Procurement documents and their transition rules.
//!
//! PurchaseRequest: Submitted -> UnderCanvass -> Ordered -> Closed, or
//! Submitted/UnderCanvass -> Rejected. One purchase order per request.
//! Inspection verdicts apply to a whole delivery; a failed inspection leaves
//! the order Delivered until a re-delivery is recorded and inspected.

use std::fmt;

use serde::Serialize;

use crate::codec::Encoder;
use crate::crypto::Digest;
use crate::payload::{LineItem, Quote, ReceivedLine, TxKind, Verdict};
use crate::state::{invariant, State, TxContext, TxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PrStatus {
    Submitted,
    UnderCanvass,
    Ordered,
    Closed,
    Rejected,
}

impl PrStatus {
    fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for PrStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PoStatus {
    Open,
    Delivered,
    Closed,
}

impl fmt::Display for PoStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PurchaseRequest {
    pub pr_id: Digest,
    pub requester: String,
    pub lines: Vec<LineItem>,
    pub status: PrStatus,
    pub aoc: Option<Digest>,
    pub po: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AbstractOfCanvass {
    pub aoc_id: Digest,
    pub pr_ref: Digest,
    pub quotes: Vec<Quote>,
    pub winner_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoLine {
    pub description: String,
    pub quantity: u64,
    pub unit: String,
    pub unit_price: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PurchaseOrder {
    pub po_id: Digest,
    pub aoc_ref: Digest,
    pub pr_ref: Digest,
    pub supplier: String,
    pub lines: Vec<PoLine>,
    pub status: PoStatus,
    /// Delivery checklists in recording order; the last one is current.
    pub checklists: Vec<Digest>,
    /// Assets registered so far, per line.
    pub registered: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChecklistLine {
    pub expected: u64,
    pub received: u64,
    pub remarks: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveryChecklist {
    pub dc_id: Digest,
    pub po_ref: Digest,
    pub lines: Vec<ChecklistLine>,
    pub inspection: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InspectionReport {
    pub ir_id: Digest,
    pub dc_ref: Digest,
    pub inspector: String,
    pub verdicts: Vec<Verdict>,
}

impl InspectionReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(Verdict::passed)
    }
}

/// Lowest total price wins; ties go to the earliest quote.
pub fn select_winning_quote(quotes: &[Quote], lines: &[LineItem]) -> Result<usize, TxError> {
    let mut best: Option<(u128, usize)> = None;
    for (i, q) in quotes.iter().enumerate() {
        if q.unit_prices.len() != lines.len() {
            return Err(invariant(format!(
                "quote {i} prices {} of {} lines",
                q.unit_prices.len(),
                lines.len()
            )));
        }
        let total: u128 = q
            .unit_prices
            .iter()
            .zip(lines)
            .map(|(p, l)| u128::from(*p) * u128::from(l.quantity))
            .sum();
        if best.map_or(true, |(t, _)| total < t) {
            best = Some((total, i));
        }
    }
    best.map(|(_, i)| i).ok_or_else(|| invariant("no quotes"))
}

fn transition(from: impl fmt::Display, kind: TxKind) -> TxError {
    TxError::InvalidTransition { from: from.to_string(), attempted: kind.name().to_owned() }
}

fn unknown(id: &Digest) -> TxError {
    TxError::UnknownReference(id.to_hex())
}

impl State {
    /// The inspection of an order's current delivery, if one has been recorded.
    pub fn current_inspection(&self, po: &PurchaseOrder) -> Option<&InspectionReport> {
        let dc = self.checklists.get(po.checklists.last()?)?;
        self.inspections.get(dc.inspection.as_ref()?)
    }

    pub fn inspection_passed(&self, po: &PurchaseOrder) -> bool {
        self.current_inspection(po).is_some_and(InspectionReport::passed)
    }

    fn pr(&self, id: &Digest) -> Result<&PurchaseRequest, TxError> {
        self.purchase_requests.get(id).ok_or_else(|| unknown(id))
    }

    fn po(&self, id: &Digest) -> Result<&PurchaseOrder, TxError> {
        self.purchase_orders.get(id).ok_or_else(|| unknown(id))
    }

    pub(crate) fn submit_pr(&mut self, ctx: &TxContext<'_>, lines: &[LineItem]) -> Result<(), TxError> {
        if lines.is_empty() {
            return Err(invariant("purchase request needs at least one line"));
        }
        if let Some(i) = lines.iter().position(|l| l.quantity == 0) {
            return Err(invariant(format!("line {i} has zero quantity")));
        }
        if let Some(i) = lines.iter().position(|l| l.description.trim().is_empty()) {
            return Err(invariant(format!("line {i} has no description")));
        }
        let id = ctx.tx.tx_id;
        self.purchase_requests.insert(
            id,
            PurchaseRequest {
                pr_id: id,
                requester: ctx.tx.author_id.clone(),
                lines: lines.to_vec(),
                status: PrStatus::Submitted,
                aoc: None,
                po: None,
            },
        );
        Ok(())
    }

    pub(crate) fn open_canvass(&mut self, pr_id: &Digest) -> Result<(), TxError> {
        let pr = self.pr(pr_id)?;
        if pr.status != PrStatus::Submitted {
            return Err(transition(format!("PR {}", pr.status), TxKind::OpenCanvass));
        }
        self.purchase_requests.get_mut(pr_id).expect("checked").status = PrStatus::UnderCanvass;
        Ok(())
    }

    pub(crate) fn submit_aoc(
        &mut self,
        ctx: &TxContext<'_>,
        pr_id: &Digest,
        quotes: &[Quote],
        winner_index: u64,
    ) -> Result<(), TxError> {
        let pr = self.pr(pr_id)?;
        if pr.status != PrStatus::UnderCanvass {
            return Err(transition(format!("PR {}", pr.status), TxKind::SubmitAoc));
        }
        if pr.aoc.is_some() {
            return Err(transition("PR already canvassed", TxKind::SubmitAoc));
        }
        let min = self.rules().min_quotes;
        if quotes.len() < min {
            return Err(invariant(format!("{} quotes, at least {min} required", quotes.len())));
        }
        let winner = select_winning_quote(quotes, &pr.lines)?;
        if winner as u64 != winner_index {
            return Err(invariant(format!(
                "winner index {winner_index} is not the lowest total (expected {winner})"
            )));
        }
        let id = ctx.tx.tx_id;
        self.canvasses.insert(
            id,
            AbstractOfCanvass { aoc_id: id, pr_ref: *pr_id, quotes: quotes.to_vec(), winner_index },
        );
        self.purchase_requests.get_mut(pr_id).expect("checked").aoc = Some(id);
        Ok(())
    }

    pub(crate) fn issue_po(&mut self, ctx: &TxContext<'_>, aoc_id: &Digest) -> Result<(), TxError> {
        let aoc = self.canvasses.get(aoc_id).ok_or_else(|| unknown(aoc_id))?;
        let pr = self.pr(&aoc.pr_ref)?;
        if pr.status != PrStatus::UnderCanvass || pr.po.is_some() {
            return Err(transition(format!("PR {}", pr.status), TxKind::IssuePo));
        }
        let quote = &aoc.quotes[aoc.winner_index as usize];
        let lines = pr
            .lines
            .iter()
            .zip(&quote.unit_prices)
            .map(|(l, p)| PoLine {
                description: l.description.clone(),
                quantity: l.quantity,
                unit: l.unit.clone(),
                unit_price: *p,
            })
            .collect::<Vec<_>>();
        let id = ctx.tx.tx_id;
        let po = PurchaseOrder {
            po_id: id,
            aoc_ref: *aoc_id,
            pr_ref: aoc.pr_ref,
            supplier: quote.supplier.clone(),
            registered: vec![0; lines.len()],
            lines,
            status: PoStatus::Open,
            checklists: Vec::new(),
        };
        let pr_ref = aoc.pr_ref;
        self.purchase_orders.insert(id, po);
        let pr = self.purchase_requests.get_mut(&pr_ref).expect("checked");
        pr.status = PrStatus::Ordered;
        pr.po = Some(id);
        Ok(())
    }

    pub(crate) fn record_delivery(
        &mut self,
        ctx: &TxContext<'_>,
        po_id: &Digest,
        lines: &[ReceivedLine],
    ) -> Result<(), TxError> {
        let po = self.po(po_id)?;
        let redelivery = po.status == PoStatus::Delivered
            && self.current_inspection(po).is_some_and(|ir| !ir.passed());
        if po.status != PoStatus::Open && !redelivery {
            let from = match (po.status, self.current_inspection(po)) {
                (PoStatus::Delivered, None) => "PO Delivered awaiting inspection".to_owned(),
                (status, _) => format!("PO {status}"),
            };
            return Err(transition(from, TxKind::RecordDelivery));
        }
        if lines.len() != po.lines.len() {
            return Err(invariant(format!(
                "checklist has {} lines, order has {}",
                lines.len(),
                po.lines.len()
            )));
        }
        for (i, (got, want)) in lines.iter().zip(&po.lines).enumerate() {
            if got.received > want.quantity {
                return Err(invariant(format!(
                    "line {i}: received {} exceeds expected {}",
                    got.received, want.quantity
                )));
            }
        }
        let id = ctx.tx.tx_id;
        let checklist = DeliveryChecklist {
            dc_id: id,
            po_ref: *po_id,
            lines: lines
                .iter()
                .zip(&po.lines)
                .map(|(got, want)| ChecklistLine {
                    expected: want.quantity,
                    received: got.received,
                    remarks: got.remarks.clone(),
                })
                .collect(),
            inspection: None,
        };
        self.checklists.insert(id, checklist);
        let po = self.purchase_orders.get_mut(po_id).expect("checked");
        po.checklists.push(id);
        po.status = PoStatus::Delivered;
        Ok(())
    }

    pub(crate) fn record_inspection(
        &mut self,
        ctx: &TxContext<'_>,
        dc_id: &Digest,
        verdicts: &[Verdict],
    ) -> Result<(), TxError> {
        let dc = self.checklists.get(dc_id).ok_or_else(|| unknown(dc_id))?;
        if dc.inspection.is_some() {
            return Err(transition("checklist already inspected", TxKind::RecordInspection));
        }
        if verdicts.len() != dc.lines.len() {
            return Err(invariant(format!(
                "{} verdicts for {} checklist lines",
                verdicts.len(),
                dc.lines.len()
            )));
        }
        if verdicts
            .iter()
            .any(|v| matches!(v, Verdict::Fail { reason } if reason.trim().is_empty()))
        {
            return Err(invariant("failed line needs a reason"));
        }
        let id = ctx.tx.tx_id;
        self.inspections.insert(
            id,
            InspectionReport {
                ir_id: id,
                dc_ref: *dc_id,
                inspector: ctx.tx.author_id.clone(),
                verdicts: verdicts.to_vec(),
            },
        );
        self.checklists.get_mut(dc_id).expect("checked").inspection = Some(id);
        Ok(())
    }

    pub(crate) fn close_po(&mut self, po_id: &Digest) -> Result<(), TxError> {
        let po = self.po(po_id)?;
        if po.status != PoStatus::Delivered || !self.inspection_passed(po) {
            let from = match (po.status, self.current_inspection(po)) {
                (PoStatus::Delivered, None) => "PO Delivered awaiting inspection".to_owned(),
                (PoStatus::Delivered, Some(_)) => "PO Delivered with failed inspection".to_owned(),
                (status, _) => format!("PO {status}"),
            };
            return Err(transition(from, TxKind::ClosePo));
        }
        let pr_ref = po.pr_ref;
        self.purchase_orders.get_mut(po_id).expect("checked").status = PoStatus::Closed;
        if let Some(pr) = self.purchase_requests.get_mut(&pr_ref) {
            pr.status = PrStatus::Closed;
        }
        Ok(())
    }

    pub(crate) fn reject_pr(&mut self, pr_id: &Digest) -> Result<(), TxError> {
        let pr = self.pr(pr_id)?;
        if !matches!(pr.status, PrStatus::Submitted | PrStatus::UnderCanvass) {
            return Err(transition(format!("PR {}", pr.status), TxKind::RejectPr));
        }
        self.purchase_requests.get_mut(pr_id).expect("checked").status = PrStatus::Rejected;
        Ok(())
    }
}

impl PurchaseRequest {
    pub(crate) fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.pr_id)
            .text(&self.requester)
            .list(&self.lines)
            .u64(self.status.code())
            .option(self.aoc.as_ref())
            .option(self.po.as_ref());
    }
}

impl AbstractOfCanvass {
    pub(crate) fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.aoc_id).put(&self.pr_ref).list(&self.quotes).u64(self.winner_index);
    }
}

impl PurchaseOrder {
    pub(crate) fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.po_id).put(&self.aoc_ref).put(&self.pr_ref).text(&self.supplier);
        enc.u64(self.lines.len() as u64);
        for l in &self.lines {
            enc.text(&l.description).u64(l.quantity).text(&l.unit).u64(l.unit_price);
        }
        enc.u64(self.status as u64).list(&self.checklists).list(&self.registered);
    }
}

impl DeliveryChecklist {
    pub(crate) fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.dc_id).put(&self.po_ref);
        enc.u64(self.lines.len() as u64);
        for l in &self.lines {
            enc.u64(l.expected).u64(l.received).text(&l.remarks);
        }
        enc.option(self.inspection.as_ref());
    }
}

impl InspectionReport {
    pub(crate) fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.ir_id).put(&self.dc_ref).text(&self.inspector).list(&self.verdicts);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::Payload;
    use crate::state::ApplyMode;
    use crate::testkit::{admin_tx, bootstrap_state, quotes_for, two_lines, Workflow};

    fn quote(prices: &[u64]) -> Quote {
        Quote { supplier: "S".into(), unit_prices: prices.to_vec() }
    }

    fn one_line() -> Vec<LineItem> {
        vec![LineItem { description: "x".into(), quantity: 1, unit: "pc".into(), specs: String::new() }]
    }

    #[test]
    fn winner_is_lowest_total() {
        let q = [quote(&[100]), quote(&[90]), quote(&[95])];
        assert_eq!(select_winning_quote(&q, &one_line()), Ok(1));
    }

    #[test]
    fn ties_go_to_earliest_quote() {
        let q = [quote(&[90]), quote(&[90]), quote(&[95])];
        assert_eq!(select_winning_quote(&q, &one_line()), Ok(0));
    }

    #[test]
    fn incomplete_quote_is_rejected() {
        let q = [quote(&[90, 1]), quote(&[90])];
        assert!(matches!(
            select_winning_quote(&q, &two_lines()),
            Err(TxError::PayloadInvariantViolated(_))
        ));
    }

    #[test]
    fn totals_weight_by_quantity() {
        // two_lines has quantities 2 and 1
        let q = [quote(&[10, 100]), quote(&[50, 10])];
        assert_eq!(select_winning_quote(&q, &two_lines()), Ok(1));
    }

    #[test]
    fn submit_pr_by_employee() {
        let mut s = bootstrap_state();
        let tx = admin_tx("emp", Payload::SubmitPr { lines: two_lines() }, 1);
        s.apply(&tx, ApplyMode::Normal).unwrap();
        let pr = &s.purchase_requests[&tx.tx_id];
        assert_eq!(pr.status, PrStatus::Submitted);
        assert_eq!(pr.lines.len(), 2);
    }

    #[test]
    fn aoc_needs_canvasser() {
        let mut w = Workflow::new();
        w.submit_pr();
        w.open_canvass();
        let tx = admin_tx(
            "emp",
            Payload::SubmitAoc { pr_id: w.pr_id(), quotes: quotes_for(2), winner_index: 0 },
            99,
        );
        assert_eq!(
            w.state.apply(&tx, ApplyMode::Normal),
            Err(TxError::RoleForbidden(crate::payload::Role::Canvasser))
        );
    }

    #[test]
    fn too_few_quotes_rejected() {
        let mut w = Workflow::new();
        w.submit_pr();
        w.open_canvass();
        let mut quotes = quotes_for(2);
        quotes.truncate(2);
        let tx = admin_tx(
            "canv",
            Payload::SubmitAoc { pr_id: w.pr_id(), quotes, winner_index: 0 },
            99,
        );
        assert!(matches!(
            w.state.apply(&tx, ApplyMode::Normal),
            Err(TxError::PayloadInvariantViolated(_))
        ));
    }

    #[test]
    fn wrong_winner_index_rejected() {
        let mut w = Workflow::new();
        w.submit_pr();
        w.open_canvass();
        let tx = admin_tx(
            "canv",
            Payload::SubmitAoc { pr_id: w.pr_id(), quotes: quotes_for(2), winner_index: 2 },
            99,
        );
        assert!(matches!(
            w.state.apply(&tx, ApplyMode::Normal),
            Err(TxError::PayloadInvariantViolated(_))
        ));
    }

    #[test]
    fn full_happy_path_closes_pr_and_po() {
        let mut w = Workflow::new();
        w.submit_pr();
        w.open_canvass();
        w.submit_aoc();
        w.issue_po();
        w.record_delivery(&[2, 1]);
        w.record_inspection(true);
        w.close_po();
        assert_eq!(w.state.purchase_requests[&w.pr_id()].status, PrStatus::Closed);
        assert_eq!(w.state.purchase_orders[&w.po_id()].status, PoStatus::Closed);
        assert_eq!(w.applied, 7);
        // the order carries the winning supplier's prices
        let po = &w.state.purchase_orders[&w.po_id()];
        let aoc = &w.state.canvasses[&po.aoc_ref];
        let win = &aoc.quotes[aoc.winner_index as usize];
        assert_eq!(po.supplier, win.supplier);
        assert_eq!(po.lines.iter().map(|l| l.unit_price).collect::<Vec<_>>(), win.unit_prices);
    }

    #[test]
    fn over_delivery_rejected() {
        let mut w = Workflow::new();
        w.submit_pr();
        w.open_canvass();
        w.submit_aoc();
        w.issue_po();
        let tx = w.delivery_tx(&[3, 1]);
        assert!(matches!(
            w.state.apply(&tx, ApplyMode::Normal),
            Err(TxError::PayloadInvariantViolated(_))
        ));
    }

    #[test]
    fn second_inspection_rejected() {
        let mut w = Workflow::new();
        w.submit_pr();
        w.open_canvass();
        w.submit_aoc();
        w.issue_po();
        w.record_delivery(&[2, 1]);
        w.record_inspection(true);
        let again = w.inspection_tx(true);
        assert!(matches!(
            w.state.apply(&again, ApplyMode::Normal),
            Err(TxError::InvalidTransition { .. })
        ));
    }

    #[test]
    fn failed_inspection_requires_redelivery() {
        let mut w = Workflow::new();
        w.submit_pr();
        w.open_canvass();
        w.submit_aoc();
        w.issue_po();
        w.record_delivery(&[2, 1]);
        w.record_inspection(false);
        assert_eq!(w.state.purchase_orders[&w.po_id()].status, PoStatus::Delivered);
        let close = w.close_tx();
        assert!(matches!(
            w.state.apply(&close, ApplyMode::Normal),
            Err(TxError::InvalidTransition { .. })
        ));
        w.record_delivery(&[2, 1]);
        w.record_inspection(true);
        w.close_po();
        assert_eq!(w.state.purchase_orders[&w.po_id()].checklists.len(), 2);
    }

    #[test]
    fn inspection_of_unknown_checklist() {
        let mut s = bootstrap_state();
        let tx = admin_tx(
            "insp",
            Payload::RecordInspection { dc_id: crate::crypto::sha3_512(b"none"), verdicts: vec![] },
            1,
        );
        assert!(matches!(s.apply(&tx, ApplyMode::Normal), Err(TxError::UnknownReference(_))));
    }

    #[test]
    fn rejection_is_terminal() {
        let mut w = Workflow::new();
        w.submit_pr();
        let tx = admin_tx("admin", Payload::RejectPr { pr_id: w.pr_id(), reason: "dup".into() }, 50);
        w.state.apply(&tx, ApplyMode::Normal).unwrap();
        assert_eq!(w.state.purchase_requests[&w.pr_id()].status, PrStatus::Rejected);
        let open = w.open_canvass_tx();
        assert!(matches!(
            w.state.apply(&open, ApplyMode::Normal),
            Err(TxError::InvalidTransition { .. })
        ));
    }
}
