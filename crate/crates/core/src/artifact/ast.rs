//! Typed view over the compiler's compact JSON AST.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

use super::literal::normalize_literal;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SrcRange {
    pub start: usize,
    pub length: usize,
    /// Compiler source index; `None` for generated code.
    pub file: Option<usize>,
}

impl SrcRange {
    pub fn parse(s: &str) -> Option<SrcRange> {
        let mut it = s.split(':');
        let start: i64 = it.next()?.parse().ok()?;
        let length: i64 = it.next()?.parse().ok()?;
        let file: i64 = it.next().unwrap_or("-1").parse().ok()?;
        if start < 0 || length < 0 {
            return None;
        }
        Some(SrcRange {
            start: start as usize,
            length: length as usize,
            file: (file >= 0).then_some(file as usize),
        })
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn contains(&self, other: &SrcRange) -> bool {
        self.file == other.file && self.start <= other.start && other.end() <= self.end()
    }

    pub fn overlaps(&self, other: &SrcRange) -> bool {
        self.file == other.file && self.start < other.end() && other.start < self.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AstKind {
    Root,
    SourceUnit,
    PragmaDirective,
    ImportDirective,
    ContractDefinition,
    FunctionDefinition,
    ModifierDefinition,
    ModifierInvocation,
    VariableDecl,
    VariableDeclarationStatement,
    EventDefinition,
    ErrorDefinition,
    StructDefinition,
    EnumDefinition,
    UsingForDirective,
    ParameterList,
    Block,
    UncheckedBlock,
    ExpressionStatement,
    Assignment,
    FunctionCall,
    FunctionCallOptions,
    MemberAccess,
    IndexAccess,
    IndexRangeAccess,
    Identifier,
    Literal,
    BinaryOperation,
    UnaryOperation,
    Conditional,
    TupleExpression,
    ElementaryTypeNameExpression,
    NewExpression,
    /// `require(..)` / `assert(..)` builtin calls.
    Require,
    If,
    While,
    DoWhile,
    For,
    Return,
    Break,
    Continue,
    EmitStatement,
    RevertStatement,
    TryStatement,
    TryCatchClause,
    InlineAssembly,
    PlaceholderStatement,
    TypeName,
    Other(String),
}

impl AstKind {
    fn from_node_type(t: &str) -> AstKind {
        use AstKind::*;
        match t {
            "SourceUnit" => SourceUnit,
            "PragmaDirective" => PragmaDirective,
            "ImportDirective" => ImportDirective,
            "ContractDefinition" => ContractDefinition,
            "FunctionDefinition" => FunctionDefinition,
            "ModifierDefinition" => ModifierDefinition,
            "ModifierInvocation" => ModifierInvocation,
            "VariableDeclaration" => VariableDecl,
            "VariableDeclarationStatement" => VariableDeclarationStatement,
            "EventDefinition" => EventDefinition,
            "ErrorDefinition" => ErrorDefinition,
            "StructDefinition" => StructDefinition,
            "EnumDefinition" => EnumDefinition,
            "UsingForDirective" => UsingForDirective,
            "ParameterList" => ParameterList,
            "Block" => Block,
            "UncheckedBlock" => UncheckedBlock,
            "ExpressionStatement" => ExpressionStatement,
            "Assignment" => Assignment,
            "FunctionCall" => FunctionCall,
            "FunctionCallOptions" => FunctionCallOptions,
            "MemberAccess" => MemberAccess,
            "IndexAccess" => IndexAccess,
            "IndexRangeAccess" => IndexRangeAccess,
            "Identifier" => Identifier,
            "Literal" => Literal,
            "BinaryOperation" => BinaryOperation,
            "UnaryOperation" => UnaryOperation,
            "Conditional" => Conditional,
            "TupleExpression" => TupleExpression,
            "ElementaryTypeNameExpression" => ElementaryTypeNameExpression,
            "NewExpression" => NewExpression,
            "IfStatement" => If,
            "WhileStatement" => While,
            "DoWhileStatement" => DoWhile,
            "ForStatement" => For,
            "Return" => Return,
            "Break" => Break,
            "Continue" => Continue,
            "EmitStatement" => EmitStatement,
            "RevertStatement" => RevertStatement,
            "TryStatement" => TryStatement,
            "TryCatchClause" => TryCatchClause,
            "InlineAssembly" => InlineAssembly,
            "PlaceholderStatement" => PlaceholderStatement,
            "ElementaryTypeName" | "UserDefinedTypeName" | "Mapping" | "ArrayTypeName"
            | "FunctionTypeName" | "IdentifierPath" => TypeName,
            other => Other(other.to_string()),
        }
    }

    pub fn is_statement(&self) -> bool {
        use AstKind::*;
        matches!(
            self,
            VariableDeclarationStatement
                | ExpressionStatement
                | If
                | While
                | DoWhile
                | For
                | Return
                | Break
                | Continue
                | EmitStatement
                | RevertStatement
                | TryStatement
                | InlineAssembly
                | PlaceholderStatement
                | Block
                | UncheckedBlock
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attr {
    Str(String),
    Int(i64),
    Bool(bool),
    IntList(Vec<i64>),
    StrList(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: i64,
    pub kind: AstKind,
    pub src: SrcRange,
    /// Field name under which the parent holds this node.
    pub role: String,
    /// Position within the parent's field when that field is a list.
    pub index: Option<usize>,
    pub attributes: BTreeMap<String, Attr>,
    pub children: Vec<AstNode>,
    /// Inline assembly is kept as an unanalyzed leaf.
    pub opaque: bool,
}

/// Declaration ids the compiler assigns to builtins (`msg`, `block`, `require`, ...).
pub fn is_builtin_ref(id: i64) -> bool {
    id < 0 || id > 4_294_000_000
}

impl AstNode {
    pub fn attr(&self, key: &str) -> Option<&Attr> {
        self.attributes.get(key)
    }

    pub fn str_attr(&self, key: &str) -> Option<&str> {
        match self.attributes.get(key) {
            Some(Attr::Str(s)) => Some(s),
            _ => None,
        }
    }

    pub fn int_attr(&self, key: &str) -> Option<i64> {
        match self.attributes.get(key) {
            Some(Attr::Int(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn bool_attr(&self, key: &str) -> bool {
        matches!(self.attributes.get(key), Some(Attr::Bool(true)))
    }

    pub fn int_list(&self, key: &str) -> &[i64] {
        match self.attributes.get(key) {
            Some(Attr::IntList(v)) => v,
            _ => &[],
        }
    }

    pub fn str_list(&self, key: &str) -> &[String] {
        match self.attributes.get(key) {
            Some(Attr::StrList(v)) => v,
            _ => &[],
        }
    }

    pub fn name(&self) -> Option<&str> {
        self.str_attr("name")
    }

    pub fn type_string(&self) -> Option<&str> {
        self.str_attr("typeString")
    }

    pub fn referenced(&self) -> Option<i64> {
        self.int_attr("referencedDeclaration")
    }

    pub fn child(&self, role: &str) -> Option<&AstNode> {
        self.children.iter().find(|c| c.role == role)
    }

    /// List-valued field in declaration order.
    pub fn list(&self, role: &str) -> Vec<&AstNode> {
        let mut v: Vec<&AstNode> = self.children.iter().filter(|c| c.role == role).collect();
        v.sort_by_key(|c| c.index);
        v
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a AstNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn find(&self, id: i64) -> Option<&AstNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(AstNode::count).sum::<usize>()
    }
}

/// Converts one compact-JSON AST node (recursively).
pub fn convert(v: &Value) -> Option<AstNode> {
    convert_inner(v, "root", None)
}

fn convert_inner(v: &Value, role: &str, index: Option<usize>) -> Option<AstNode> {
    let obj = v.as_object()?;
    let node_type = obj.get("nodeType")?.as_str()?;
    let mut kind = AstKind::from_node_type(node_type);
    let id = obj.get("id").and_then(Value::as_i64).unwrap_or(-1);
    let src = obj
        .get("src")
        .and_then(Value::as_str)
        .and_then(SrcRange::parse)
        .unwrap_or_default();

    let mut attributes = BTreeMap::new();
    let mut children = Vec::new();
    let opaque = kind == AstKind::InlineAssembly;

    for (key, val) in obj {
        if matches!(key.as_str(), "nodeType" | "id" | "src") {
            continue;
        }
        match val {
            Value::String(s) => {
                attributes.insert(key.clone(), Attr::Str(s.clone()));
            }
            Value::Bool(b) => {
                attributes.insert(key.clone(), Attr::Bool(*b));
            }
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    attributes.insert(key.clone(), Attr::Int(i));
                }
            }
            Value::Object(o) if key == "typeDescriptions" => {
                if let Some(Value::String(s)) = o.get("typeString") {
                    attributes.insert("typeString".into(), Attr::Str(s.clone()));
                }
            }
            Value::Object(_) if !opaque => {
                if let Some(c) = convert_inner(val, key, None) {
                    children.push(c);
                }
            }
            Value::Array(items) => {
                if !items.is_empty() && items.iter().all(Value::is_i64) {
                    let ints = items.iter().filter_map(Value::as_i64).collect();
                    attributes.insert(key.clone(), Attr::IntList(ints));
                } else if !items.is_empty() && items.iter().all(Value::is_string) {
                    let strs = items.iter().filter_map(|x| x.as_str().map(str::to_string)).collect();
                    attributes.insert(key.clone(), Attr::StrList(strs));
                } else if !opaque {
                    for (i, item) in items.iter().enumerate() {
                        if let Some(c) = convert_inner(item, key, Some(i)) {
                            children.push(c);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    children.sort_by_key(|c| (c.src.start, c.src.file.is_none()));

    if kind == AstKind::Literal {
        let lit_kind = attributes.get("kind").cloned();
        let value = attributes.get("value").cloned();
        let sub = attributes.get("subdenomination").cloned();
        let ty = attributes.get("typeString").cloned();
        let get = |a: &Option<Attr>| match a {
            Some(Attr::Str(s)) => Some(s.clone()),
            _ => None,
        };
        if let Some(norm) = normalize_literal(
            get(&lit_kind).as_deref().unwrap_or(""),
            get(&value).as_deref(),
            get(&sub).as_deref(),
            get(&ty).as_deref().unwrap_or(""),
        ) {
            attributes.insert("normalized".into(), Attr::Str(norm));
        }
    }

    if kind == AstKind::FunctionCall {
        let callee = children.iter().find(|c| c.role == "expression");
        if let Some(c) = callee {
            if c.kind == AstKind::Identifier
                && matches!(c.name(), Some("require") | Some("assert"))
                && c.referenced().is_some_and(is_builtin_ref)
            {
                kind = AstKind::Require;
            }
        }
    }

    Some(AstNode {
        id,
        kind,
        src,
        role: role.to_string(),
        index,
        attributes,
        children,
        opaque,
    })
}
