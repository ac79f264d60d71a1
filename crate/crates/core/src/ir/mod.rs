//! Instruction-level contract IR.
//!
//! Locals are in single-assignment form within a function; storage is not
//! renamed and is addressed through abstract [`SlotId`]s.

pub mod facts;
pub mod icfg;
pub mod interchange;
pub mod lower;

pub use facts::{extract_primitives, Facts};
pub use icfg::{build_icfg, Icfg};
pub use interchange::{export_ir_json, import_ir_json, import_ir_value};
pub use lower::{lower_contract, lower_unit};

use crate::frontend::{FunctionKind, Mutability, Span, Visibility};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

pub const IR_VERSION: u32 = 1;

/// Instruction identifier: (function index, instruction index). Each
/// function also has an entry pseudo-node (parameter binding) and an exit
/// pseudo-node used by return edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstId {
    pub func: u32,
    pub idx: u32,
}

impl InstId {
    pub const ENTRY: u32 = u32::MAX;
    pub const EXIT: u32 = u32::MAX - 1;

    pub fn new(func: u32, idx: u32) -> Self {
        InstId { func, idx }
    }

    pub fn entry(func: u32) -> Self {
        InstId { func, idx: Self::ENTRY }
    }

    pub fn exit(func: u32) -> Self {
        InstId { func, idx: Self::EXIT }
    }

    pub fn is_entry(self) -> bool {
        self.idx == Self::ENTRY
    }

    pub fn is_exit(self) -> bool {
        self.idx == Self::EXIT
    }

    pub fn is_pseudo(self) -> bool {
        self.is_entry() || self.is_exit()
    }
}

impl fmt::Display for InstId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.idx {
            Self::ENTRY => write!(f, "{}:entry", self.func),
            Self::EXIT => write!(f, "{}:exit", self.func),
            i => write!(f, "{}:{}", self.func, i),
        }
    }
}

impl FromStr for InstId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (f, i) = s.split_once(':').ok_or_else(|| format!("instruction id `{s}` is not of the form F:I"))?;
        let func = f.parse::<u32>().map_err(|_| format!("bad function index in `{s}`"))?;
        let idx = match i {
            "entry" => Self::ENTRY,
            "exit" => Self::EXIT,
            _ => i.parse::<u32>().ok().filter(|n| *n < Self::EXIT).ok_or_else(|| format!("bad instruction index in `{s}`"))?,
        };
        Ok(InstId { func, idx })
    }
}

impl Serialize for InstId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InstId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxProp {
    #[serde(rename = "msg.sender")]
    Sender,
    #[serde(rename = "msg.value")]
    Value,
    #[serde(rename = "msg.data")]
    Data,
    #[serde(rename = "block.timestamp")]
    Timestamp,
    #[serde(rename = "block.number")]
    BlockNumber,
    #[serde(rename = "tx.origin")]
    Origin,
}

impl TxProp {
    pub fn from_member(base: &str, member: &str) -> Option<TxProp> {
        Some(match (base, member) {
            ("msg", "sender") => TxProp::Sender,
            ("msg", "value") => TxProp::Value,
            ("msg", "data") => TxProp::Data,
            ("block", "timestamp") => TxProp::Timestamp,
            ("block", "number") => TxProp::BlockNumber,
            ("tx", "origin") => TxProp::Origin,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TxProp::Sender => "msg.sender",
            TxProp::Value => "msg.value",
            TxProp::Data => "msg.data",
            TxProp::Timestamp => "block.timestamp",
            TxProp::BlockNumber => "block.number",
            TxProp::Origin => "tx.origin",
        }
    }
}

/// Abstraction of a mapping key or array index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "key", content = "value", rename_all = "camelCase")]
pub enum AbsKey {
    Const(String),
    Tx(TxProp),
    Any,
}

impl AbsKey {
    pub fn compatible(&self, other: &AbsKey) -> bool {
        matches!(self, AbsKey::Any) || matches!(other, AbsKey::Any) || self == other
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "elem", content = "value", rename_all = "camelCase")]
pub enum PathElem {
    MappingKey(AbsKey),
    ArrayIndex(AbsKey),
    Member(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlotId {
    pub base_slot: u32,
    pub access_path: Vec<PathElem>,
    pub is_mapping_base: bool,
}

impl SlotId {
    pub fn base(slot: u32, is_mapping: bool) -> Self {
        SlotId { base_slot: slot, access_path: Vec::new(), is_mapping_base: is_mapping }
    }

    /// Conservative may-alias: same base and element-wise compatible on the
    /// common prefix (a whole-struct or whole-array access aliases its parts).
    pub fn may_alias(&self, other: &SlotId) -> bool {
        if self.base_slot != other.base_slot {
            return false;
        }
        self.access_path.iter().zip(&other.access_path).all(|(a, b)| match (a, b) {
            (PathElem::MappingKey(x), PathElem::MappingKey(y)) => x.compatible(y),
            (PathElem::ArrayIndex(x), PathElem::ArrayIndex(y)) => x.compatible(y),
            (PathElem::Member(x), PathElem::Member(y)) => x == y,
            _ => true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ValueRef {
    Local { func: u32, name: String, version: u32 },
    Param { func: u32, index: u32 },
    StateSlot { slot: SlotId },
    TxProperty { prop: TxProp },
    Const { value: String },
    CallReturn { inst: InstId, index: u32 },
}

impl ValueRef {
    pub fn constant(v: impl Into<String>) -> Self {
        ValueRef::Const { value: v.into() }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ValueRef::Local { .. } => "local",
            ValueRef::Param { .. } => "param",
            ValueRef::StateSlot { .. } => "stateSlot",
            ValueRef::TxProperty { .. } => "tx",
            ValueRef::Const { .. } => "const",
            ValueRef::CallReturn { .. } => "callReturn",
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, ValueRef::Const { .. })
    }
}

impl fmt::Display for ValueRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueRef::Local { name, version, .. } => write!(f, "{name}#{version}"),
            ValueRef::Param { index, .. } => write!(f, "param{index}"),
            ValueRef::StateSlot { slot } => write!(f, "slot{}", slot.base_slot),
            ValueRef::TxProperty { prop } => f.write_str(prop.as_str()),
            ValueRef::Const { value } => f.write_str(value),
            ValueRef::CallReturn { inst, index } => write!(f, "ret({inst},{index})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinOpKind {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
    #[serde(rename = "%")]
    Rem,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "&&")]
    And,
    #[serde(rename = "||")]
    Or,
}

impl BinOpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BinOpKind::Add => "+",
            BinOpKind::Sub => "-",
            BinOpKind::Mul => "*",
            BinOpKind::Div => "/",
            BinOpKind::Rem => "%",
            BinOpKind::Lt => "<",
            BinOpKind::Le => "<=",
            BinOpKind::Gt => ">",
            BinOpKind::Ge => ">=",
            BinOpKind::Eq => "==",
            BinOpKind::Ne => "!=",
            BinOpKind::And => "&&",
            BinOpKind::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "camelCase")]
pub enum AssignForm {
    Copy,
    /// `operands = [base, index]`
    Index,
    Member {
        name: String,
    },
    Convert {
        ty: String,
    },
    Unary {
        op: String,
    },
    /// Opaque computation over the operands (hashing, bitwise ops, `new`, ...).
    Builtin {
        name: String,
    },
    /// Write into a memory aggregate: `operands = [old, index.., value]`.
    IndexStore,
    MemberStore {
        name: String,
    },
    Emit {
        event: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowLevelKind {
    Call,
    Send,
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum InstKind {
    Assign(AssignForm),
    BinOp {
        op: BinOpKind,
    },
    /// Operands are the arguments.
    InternalCall {
        callee: String,
        resolved: Option<u32>,
        returns: u32,
    },
    /// `operands = [receiver, args..]`.
    ExternalCall {
        interface: Option<String>,
        function: String,
        mutability: Option<Mutability>,
        returns: u32,
    },
    /// `operands = [receiver, value, data..]`.
    LowLevelCall {
        call: LowLevelKind,
    },
    /// `operands = [value, keys..]`.
    SStore {
        slot: SlotId,
    },
    /// `operands = [keys..]`.
    SLoad {
        slot: SlotId,
    },
    Require,
    Revert,
    Return,
    Jump {
        target: u32,
    },
    CondJump {
        then: u32,
        #[serde(rename = "else")]
        otherwise: u32,
    },
    Phi,
}

impl InstKind {
    pub fn name(&self) -> &'static str {
        match self {
            InstKind::Assign(_) => "Assign",
            InstKind::BinOp { .. } => "BinOp",
            InstKind::InternalCall { .. } => "InternalCall",
            InstKind::ExternalCall { .. } => "ExternalCall",
            InstKind::LowLevelCall { .. } => "LowLevelCall",
            InstKind::SStore { .. } => "SStore",
            InstKind::SLoad { .. } => "SLoad",
            InstKind::Require => "Require",
            InstKind::Revert => "Revert",
            InstKind::Return => "Return",
            InstKind::Jump { .. } => "Jump",
            InstKind::CondJump { .. } => "CondJump",
            InstKind::Phi => "Phi",
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, InstKind::Return | InstKind::Revert | InstKind::Jump { .. } | InstKind::CondJump { .. })
    }

    pub fn is_call(&self) -> bool {
        matches!(self, InstKind::InternalCall { .. } | InstKind::ExternalCall { .. } | InstKind::LowLevelCall { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: InstId,
    pub kind: InstKind,
    pub operands: Vec<ValueRef>,
    pub result: Option<ValueRef>,
    #[serde(default)]
    pub span: Span,
}

impl Instruction {
    /// Values this instruction defines: its result, or every call return.
    pub fn defs(&self) -> Vec<ValueRef> {
        match &self.kind {
            InstKind::InternalCall { returns, .. } | InstKind::ExternalCall { returns, .. } => {
                (0..(*returns).max(1)).map(|k| ValueRef::CallReturn { inst: self.id, index: k }).collect()
            }
            InstKind::LowLevelCall { .. } => vec![ValueRef::CallReturn { inst: self.id, index: 0 }],
            _ => self.result.iter().cloned().collect(),
        }
    }

    /// Intra-procedural successors (indices), ignoring the implicit abort of Require.
    pub fn successors(&self, len: u32) -> Vec<u32> {
        let next = self.id.idx + 1;
        match &self.kind {
            InstKind::Return | InstKind::Revert => vec![],
            InstKind::Jump { target } => vec![*target],
            InstKind::CondJump { then, otherwise } => {
                if then == otherwise {
                    vec![*then]
                } else {
                    vec![*then, *otherwise]
                }
            }
            _ if next < len => vec![next],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamIr {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FunctionIr {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: FunctionKind,
    pub visibility: Visibility,
    pub mutability: Mutability,
    pub modifiers: Vec<String>,
    pub params: Vec<ParamIr>,
    #[serde(default)]
    pub returns: Vec<String>,
    pub instructions: Vec<Instruction>,
    /// Original source text of the function, when lowered from Solidity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Where `source` starts in the original file; instruction spans are
    /// offsets into that same file.
    #[serde(default)]
    pub span: Span,
}

fn default_kind() -> FunctionKind {
    FunctionKind::Function
}

impl FunctionIr {
    pub fn is_public(&self) -> bool {
        self.visibility.is_public() && self.kind != FunctionKind::Constructor
    }

    pub fn signature(&self) -> String {
        let tys: Vec<&str> = self.params.iter().map(|p| p.ty.as_str()).collect();
        format!("{}({})", self.name, tys.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVarIr {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub slot: u32,
}

impl StateVarIr {
    pub fn is_mapping(&self) -> bool {
        self.ty.starts_with("mapping(")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContractIr {
    pub ir_version: u32,
    pub contract: String,
    pub state_vars: Vec<StateVarIr>,
    pub functions: Vec<FunctionIr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<crate::frontend::Diagnostic>,
}

impl ContractIr {
    pub fn function_index(&self, name: &str) -> Option<u32> {
        self.functions.iter().position(|f| f.name == name).map(|i| i as u32)
    }

    pub fn inst(&self, id: InstId) -> Option<&Instruction> {
        if id.is_pseudo() {
            return None;
        }
        self.functions.get(id.func as usize)?.instructions.get(id.idx as usize)
    }

    pub fn func(&self, id: InstId) -> &FunctionIr {
        &self.functions[id.func as usize]
    }

    pub fn state_var_by_slot(&self, slot: u32) -> Option<&StateVarIr> {
        self.state_vars.iter().find(|v| v.slot == slot)
    }

    /// State variable name for a slot, with its access path, e.g. `burnAmount[*]`.
    pub fn slot_name(&self, slot: &SlotId) -> String {
        self.state_var_by_slot(slot.base_slot).map(|v| v.name.clone()).unwrap_or_else(|| format!("slot{}", slot.base_slot))
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.functions.iter().flat_map(|f| f.instructions.iter())
    }

    pub fn instruction_count(&self) -> usize {
        self.functions.iter().map(|f| f.instructions.len()).sum()
    }
}

/// Short human rendering of one instruction, used in dumps and prompts.
/// Source text of an instruction with whitespace collapsed, or its IR
/// rendering when the text is unavailable (imported IR, inlined modifiers).
pub fn describe_inst(ir: &ContractIr, id: InstId) -> String {
    let Some(i) = ir.inst(id) else { return id.to_string() };
    let f = ir.func(id);
    let from_source = f.source.as_ref().and_then(|src| {
        let a = i.span.start.checked_sub(f.span.start)?;
        let b = i.span.end.checked_sub(f.span.start)?;
        src.get(a..b).map(|t| t.split_whitespace().collect::<Vec<_>>().join(" "))
    });
    from_source.filter(|t| !t.is_empty()).unwrap_or_else(|| render_inst(ir, i))
}

pub fn render_inst(ir: &ContractIr, inst: &Instruction) -> String {
    let ops: Vec<String> = inst.operands.iter().map(|o| o.to_string()).collect();
    let ops = ops.join(", ");
    let head = match &inst.kind {
        InstKind::Assign(form) => match form {
            AssignForm::Copy => format!("copy({ops})"),
            AssignForm::Index => format!("index({ops})"),
            AssignForm::Member { name } => format!("member .{name} ({ops})"),
            AssignForm::Convert { ty } => format!("{ty}({ops})"),
            AssignForm::Unary { op } => format!("{op}({ops})"),
            AssignForm::Builtin { name } => format!("{name}({ops})"),
            AssignForm::IndexStore => format!("indexStore({ops})"),
            AssignForm::MemberStore { name } => format!("memberStore .{name} ({ops})"),
            AssignForm::Emit { event } => format!("emit {event}({ops})"),
        },
        InstKind::BinOp { op } => format!("{} {} {}", ops_at(inst, 0), op.as_str(), ops_at(inst, 1)),
        InstKind::InternalCall { callee, .. } => format!("call {callee}({ops})"),
        InstKind::ExternalCall { interface, function, .. } => {
            format!("extcall {}.{function}({ops})", interface.as_deref().unwrap_or("?"))
        }
        InstKind::LowLevelCall { call } => format!("lowlevel {call:?}({ops})").to_lowercase(),
        InstKind::SStore { slot } => format!("sstore {} <- {ops}", ir.slot_name(slot)),
        InstKind::SLoad { slot } => format!("sload {} [{ops}]", ir.slot_name(slot)),
        InstKind::Require => format!("require({ops})"),
        InstKind::Revert => format!("revert({ops})"),
        InstKind::Return => format!("return({ops})"),
        InstKind::Jump { target } => format!("jump {target}"),
        InstKind::CondJump { then, otherwise } => format!("if {ops} then {then} else {otherwise}"),
        InstKind::Phi => format!("phi({ops})"),
    };
    match &inst.result {
        Some(r) => format!("{r} = {head}"),
        None => head,
    }
}

fn ops_at(inst: &Instruction, i: usize) -> String {
    inst.operands.get(i).map(|o| o.to_string()).unwrap_or_default()
}
