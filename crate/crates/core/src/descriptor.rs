//! XML component descriptors.
//!
//! A descriptor is a single `component` root element (usually written with a
//! `dr:` prefix) carrying the task contract, plus `implementation`,
//! `periodictask`, `inport`/`outport` and `property` children:
//!
//! ```xml
//! <dr:component name="camera" type="periodic" enabled="true" cpuusage="0.1">
//!   <implementation bincode="ua.pats.demo.smartcamera.RTComponent"/>
//!   <periodictask frequency="100" runoncpu="0" priority="2"/>
//!   <outport name="images" interface="RTAI.SHM" type="Byte" size="400"/>
//!   <property name="prox00" type="Integer" value="6"/>
//! </dr:component>
//! ```

use std::collections::HashSet;
use std::fmt;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest task name the original RTOS could address.
pub const SHORT_NAME_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskType {
    Periodic,
    Aperiodic,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Periodic => "periodic",
            TaskType::Aperiodic => "aperiodic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    In,
    Out,
}

/// Transport backing a port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Interface {
    SharedMemory,
    Mailbox,
}

impl Interface {
    pub fn as_str(self) -> &'static str {
        match self {
            Interface::SharedMemory => "RTAI.SHM",
            Interface::Mailbox => "RTAI.Mailbox",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        if text.eq_ignore_ascii_case("RTAI.SHM") {
            Some(Interface::SharedMemory)
        } else if text.eq_ignore_ascii_case("RTAI.Mailbox") {
            Some(Interface::Mailbox)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataType {
    Integer,
    Byte,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Integer => "Integer",
            DataType::Byte => "Byte",
        }
    }

    /// Width of one element in bytes.
    pub fn size_bytes(self) -> usize {
        match self {
            DataType::Integer => 4,
            DataType::Byte => 1,
        }
    }

    fn parse(text: &str) -> Option<Self> {
        if text.eq_ignore_ascii_case("integer") {
            Some(DataType::Integer)
        } else if text.eq_ignore_ascii_case("byte") {
            Some(DataType::Byte)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueType {
    Integer,
    String,
    Float,
    Boolean,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Integer => "Integer",
            ValueType::String => "String",
            ValueType::Float => "Float",
            ValueType::Boolean => "Boolean",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        [ValueType::Integer, ValueType::String, ValueType::Float, ValueType::Boolean]
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(text))
    }

    /// Whether `literal` is a valid value of this type.
    pub fn accepts(self, literal: &str) -> bool {
        match self {
            ValueType::Integer => literal.parse::<i64>().is_ok(),
            ValueType::String => true,
            ValueType::Float => literal.parse::<f64>().is_ok(),
            ValueType::Boolean => parse_bool(literal).is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTaskSpec {
    /// Invocations per second.
    pub frequency: f64,
    pub run_on_cpu: u32,
    /// Smaller is more urgent.
    pub priority: u32,
}

impl PeriodicTaskSpec {
    pub fn period_ns(&self) -> u64 {
        (1e9 / self.frequency).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortSpec {
    pub name: String,
    pub direction: Direction,
    pub interface: Interface,
    pub data_type: DataType,
    /// Element count, not bytes.
    pub size: u32,
}

impl PortSpec {
    pub fn byte_len(&self) -> usize {
        self.size as usize * self.data_type.size_bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub value_type: ValueType,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDescriptor {
    pub name: String,
    pub desc: String,
    pub task_type: TaskType,
    pub enabled: bool,
    pub cpu_usage: f64,
    pub bincode: String,
    pub task: Option<PeriodicTaskSpec>,
    pub inports: Vec<PortSpec>,
    pub outports: Vec<PortSpec>,
    pub properties: Vec<PropertySpec>,
}

impl ComponentDescriptor {
    /// CPU the claim is charged to. Aperiodic components are charged to CPU 0.
    pub fn cpu(&self) -> u32 {
        self.task.as_ref().map_or(0, |t| t.run_on_cpu)
    }

    pub fn property(&self, name: &str) -> Option<&PropertySpec> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn inport(&self, name: &str) -> Option<&PortSpec> {
        self.inports.iter().find(|p| p.name == name)
    }

    pub fn outport(&self, name: &str) -> Option<&PortSpec> {
        self.outports.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing required {0}")]
    MissingRequired(String),
    #[error("invalid value for {field}: {text:?}")]
    InvalidValue { field: String, text: String },
    #[error("duplicate port name {0:?}")]
    DuplicatePortName(String),
    #[error("task type and periodictask element disagree")]
    TaskSpecMismatch,
    #[error("duplicate element <{0}>")]
    DuplicateElement(String),
    #[error("unknown element <{0}>")]
    UnknownElement(String),
    #[error("unknown attribute {attribute:?} on <{element}>")]
    UnknownAttribute { element: String, attribute: String },
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::MalformedXml(_) => "malformed-xml",
            ParseError::MissingRequired(_) => "missing-required",
            ParseError::InvalidValue { .. } => "invalid-value",
            ParseError::DuplicatePortName(_) => "duplicate-port-name",
            ParseError::TaskSpecMismatch => "task-spec-mismatch",
            ParseError::DuplicateElement(_) => "duplicate-element",
            ParseError::UnknownElement(_) => "unknown-element",
            ParseError::UnknownAttribute { .. } => "unknown-attribute",
        }
    }
}

/// How unknown elements and attributes are treated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ParseMode {
    #[default]
    Strict,
    /// Unknown items are skipped and reported as warnings.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDescriptor {
    pub descriptor: ComponentDescriptor,
    pub warnings: Vec<String>,
}

/// Parses a descriptor in strict mode.
pub fn parse_descriptor(xml: &str) -> Result<ComponentDescriptor, ParseError> {
    parse_descriptor_with(xml, ParseMode::Strict).map(|p| p.descriptor)
}

pub fn parse_descriptor_with(xml: &str, mode: ParseMode) -> Result<ParsedDescriptor, ParseError> {
    let elements = read_elements(xml, mode)?;
    let mut warnings = elements.warnings;
    let descriptor = build_descriptor(elements.root, elements.children, mode, &mut warnings)?;
    Ok(ParsedDescriptor {
        descriptor,
        warnings,
    })
}

/// Flat element with its attributes in document order.
struct RawElement {
    name: String,
    attrs: Vec<(String, String)>,
}

struct RawDocument {
    root: RawElement,
    children: Vec<RawElement>,
    warnings: Vec<String>,
}

fn malformed(e: impl fmt::Display) -> ParseError {
    ParseError::MalformedXml(e.to_string())
}

fn local_name(qname: &str) -> &str {
    qname.rsplit(':').next().unwrap_or(qname)
}

fn raw_element(start: &BytesStart<'_>) -> Result<RawElement, ParseError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(malformed)?
        .to_string();
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(malformed)?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(malformed)?
            .to_string();
        let value = attr.unescape_value().map_err(malformed)?.into_owned();
        attrs.push((key, value));
    }
    Ok(RawElement { name, attrs })
}

// The published sample starts with `<? xml ...?>`; quick-xml reads that as a
// processing instruction, which is skipped like any other.
fn read_elements(xml: &str, mode: ParseMode) -> Result<RawDocument, ParseError> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);

    let mut root: Option<RawElement> = None;
    let mut root_closed = false;
    let mut children = Vec::new();
    let mut warnings = Vec::new();
    // Depth below the root; elements deeper than one level are never descriptor content.
    let mut depth = 0usize;
    let mut skipping_from: Option<usize> = None;

    loop {
        let event = reader.read_event().map_err(malformed)?;
        match event {
            Event::Start(ref start) | Event::Empty(ref start) => {
                let is_empty = matches!(event, Event::Empty(_));
                if root_closed {
                    return Err(malformed("content after the root element"));
                }
                let element = raw_element(start)?;
                if root.is_none() {
                    if local_name(&element.name) != "component" {
                        return Err(malformed(format!(
                            "root element must be <component>, found <{}>",
                            element.name
                        )));
                    }
                    root = Some(element);
                    if is_empty {
                        root_closed = true;
                    } else {
                        depth = 0;
                    }
                    continue;
                }
                depth += 1;
                if skipping_from.is_none() {
                    if depth == 1 && is_child_element(&element.name) {
                        children.push(element);
                    } else {
                        let path = element.name.clone();
                        match mode {
                            ParseMode::Strict => return Err(ParseError::UnknownElement(path)),
                            ParseMode::Lenient => {
                                warnings.push(format!("ignored unknown element <{path}>"));
                                skipping_from = Some(depth);
                            }
                        }
                    }
                }
                if is_empty {
                    if skipping_from == Some(depth) {
                        skipping_from = None;
                    }
                    depth -= 1;
                }
            }
            Event::End(_) => {
                if root.is_some() && !root_closed && depth == 0 {
                    root_closed = true;
                } else {
                    if skipping_from == Some(depth) {
                        skipping_from = None;
                    }
                    depth = depth.saturating_sub(1);
                }
            }
            Event::Eof => break,
            // Text (including elisions such as "..."), comments, declarations
            // and processing instructions carry no descriptor content.
            _ => {}
        }
    }

    let root = root.ok_or_else(|| malformed("document has no root element"))?;
    if !root_closed {
        return Err(malformed("unexpected end of document"));
    }
    Ok(RawDocument {
        root,
        children,
        warnings,
    })
}

fn is_child_element(name: &str) -> bool {
    matches!(
        name,
        "implementation" | "periodictask" | "inport" | "outport" | "property"
    )
}

/// Attribute lookup over one element that tracks which attributes were consumed.
struct Attrs<'a> {
    element: &'a str,
    attrs: &'a [(String, String)],
    used: Vec<bool>,
}

impl<'a> Attrs<'a> {
    fn new(element: &'a RawElement, display: &'a str) -> Self {
        Attrs {
            element: display,
            attrs: &element.attrs,
            used: vec![false; element.attrs.len()],
        }
    }

    fn field(&self, attr: &str) -> String {
        format!("{}.{}", self.element, attr)
    }

    fn get(&mut self, attr: &str) -> Option<&'a str> {
        let idx = self.attrs.iter().position(|(k, _)| k == attr)?;
        self.used[idx] = true;
        Some(self.attrs[idx].1.as_str())
    }

    fn require(&mut self, attr: &str) -> Result<&'a str, ParseError> {
        self.get(attr)
            .ok_or_else(|| ParseError::MissingRequired(self.field(attr)))
    }

    fn invalid(&self, attr: &str, text: &str) -> ParseError {
        ParseError::InvalidValue {
            field: self.field(attr),
            text: text.to_string(),
        }
    }

    /// Rejects (strict) or reports (lenient) every attribute not consumed so far.
    fn finish(
        self,
        mode: ParseMode,
        ignore: impl Fn(&str) -> bool,
        warnings: &mut Vec<String>,
    ) -> Result<(), ParseError> {
        for ((key, _), used) in self.attrs.iter().zip(&self.used) {
            if *used || ignore(key) {
                continue;
            }
            match mode {
                ParseMode::Strict => {
                    return Err(ParseError::UnknownAttribute {
                        element: self.element.to_string(),
                        attribute: key.clone(),
                    })
                }
                ParseMode::Lenient => warnings.push(format!(
                    "ignored unknown attribute {key:?} on <{}>",
                    self.element
                )),
            }
        }
        Ok(())
    }
}

fn parse_bool(text: &str) -> Option<bool> {
    if text.eq_ignore_ascii_case("true") {
        Some(true)
    } else if text.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

fn is_valid_bincode(code: &str) -> bool {
    !code.is_empty()
        && code.split('.').all(|seg| {
            !seg.is_empty()
                && seg
                    .chars()
                    .all(|c| c.is_alphanumeric() || c == '_' || c == '$')
        })
}

fn build_descriptor(
    root: RawElement,
    children: Vec<RawElement>,
    mode: ParseMode,
    warnings: &mut Vec<String>,
) -> Result<ComponentDescriptor, ParseError> {
    let mut attrs = Attrs::new(&root, "component");

    let name = attrs.require("name")?;
    if name.is_empty() {
        return Err(attrs.invalid("name", name));
    }
    let desc = attrs.get("desc").unwrap_or_default().to_string();
    let type_text = attrs.require("type")?;
    let task_type = if type_text.eq_ignore_ascii_case("periodic") {
        TaskType::Periodic
    } else if type_text.eq_ignore_ascii_case("aperiodic") {
        TaskType::Aperiodic
    } else {
        return Err(attrs.invalid("type", type_text));
    };
    let enabled = match attrs.get("enabled") {
        None => true,
        Some(text) => parse_bool(text).ok_or_else(|| attrs.invalid("enabled", text))?,
    };
    let cpu_usage = match attrs.get("cpuusage") {
        None => 0.0,
        Some(text) => text
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|u| (0.0..=1.0).contains(u))
            .ok_or_else(|| attrs.invalid("cpuusage", text))?,
    };
    // Namespace declarations and prefixed attributes on the root are not ours.
    attrs.finish(
        mode,
        |key| key == "xmlns" || key.contains(':'),
        warnings,
    )?;

    let mut bincode: Option<String> = None;
    let mut task: Option<PeriodicTaskSpec> = None;
    let mut inports = Vec::new();
    let mut outports = Vec::new();
    let mut properties = Vec::new();

    for child in &children {
        match child.name.as_str() {
            "implementation" => {
                if bincode.is_some() {
                    return Err(ParseError::DuplicateElement(child.name.clone()));
                }
                let mut a = Attrs::new(child, "implementation");
                let raw = a.require("bincode")?;
                // Long class paths are often wrapped across lines.
                let code: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
                if !is_valid_bincode(&code) {
                    return Err(a.invalid("bincode", raw));
                }
                a.finish(mode, |_| false, warnings)?;
                bincode = Some(code);
            }
            "periodictask" => {
                if task.is_some() {
                    return Err(ParseError::DuplicateElement(child.name.clone()));
                }
                task = Some(parse_task(child, mode, warnings)?);
            }
            "inport" | "outport" => {
                let port = parse_port(child, mode, warnings)?;
                if port.direction == Direction::In {
                    inports.push(port);
                } else {
                    outports.push(port);
                }
            }
            "property" => properties.push(parse_property(child, mode, warnings)?),
            _ => unreachable!("filtered by is_child_element"),
        }
    }

    let bincode = bincode.ok_or_else(|| ParseError::MissingRequired("implementation".into()))?;
    match (task_type, &task) {
        (TaskType::Periodic, Some(_)) | (TaskType::Aperiodic, None) => {}
        _ => return Err(ParseError::TaskSpecMismatch),
    }

    let mut seen = HashSet::new();
    for port in inports.iter().chain(&outports) {
        if !seen.insert(port.name.as_str()) {
            return Err(ParseError::DuplicatePortName(port.name.clone()));
        }
    }

    Ok(ComponentDescriptor {
        name: name.to_string(),
        desc,
        task_type,
        enabled,
        cpu_usage,
        bincode,
        task,
        inports,
        outports,
        properties,
    })
}

fn parse_u32(a: &Attrs<'_>, attr: &str, text: &str) -> Result<u32, ParseError> {
    text.trim().parse::<u32>().map_err(|_| a.invalid(attr, text))
}

fn parse_task(
    el: &RawElement,
    mode: ParseMode,
    warnings: &mut Vec<String>,
) -> Result<PeriodicTaskSpec, ParseError> {
    let mut a = Attrs::new(el, "periodictask");
    let freq_text = a.require("frequency")?;
    let frequency = freq_text
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|f| f.is_finite() && *f > 0.0 && (1e9 / f).round() >= 1.0)
        .ok_or_else(|| a.invalid("frequency", freq_text))?;

    // `runoncup` is the spelling used in the published sample.
    let cpu_text = match (a.get("runoncpu"), a.get("runoncup")) {
        (Some(x), Some(y)) if x.trim() != y.trim() => return Err(a.invalid("runoncpu", y)),
        (Some(x), _) | (None, Some(x)) => x,
        (None, None) => return Err(ParseError::MissingRequired(a.field("runoncpu"))),
    };
    let run_on_cpu = parse_u32(&a, "runoncpu", cpu_text)?;
    let prio_text = a.require("priority")?;
    let priority = parse_u32(&a, "priority", prio_text)?;
    a.finish(mode, |_| false, warnings)?;
    Ok(PeriodicTaskSpec {
        frequency,
        run_on_cpu,
        priority,
    })
}

fn parse_port(
    el: &RawElement,
    mode: ParseMode,
    warnings: &mut Vec<String>,
) -> Result<PortSpec, ParseError> {
    let direction = if el.name == "inport" {
        Direction::In
    } else {
        Direction::Out
    };
    let mut a = Attrs::new(el, &el.name);
    let name = a.require("name")?;
    if name.is_empty() {
        return Err(a.invalid("name", name));
    }
    let iface_text = a.require("interface")?;
    let interface = Interface::parse(iface_text.trim()).ok_or_else(|| a.invalid("interface", iface_text))?;
    let type_text = a.require("type")?;
    let data_type = DataType::parse(type_text.trim()).ok_or_else(|| a.invalid("type", type_text))?;
    let size_text = a.require("size")?;
    let size = parse_u32(&a, "size", size_text)?;
    if size == 0 {
        return Err(a.invalid("size", size_text));
    }
    a.finish(mode, |_| false, warnings)?;
    Ok(PortSpec {
        name: name.to_string(),
        direction,
        interface,
        data_type,
        size,
    })
}

fn parse_property(
    el: &RawElement,
    mode: ParseMode,
    warnings: &mut Vec<String>,
) -> Result<PropertySpec, ParseError> {
    let mut a = Attrs::new(el, "property");
    let name = a.require("name")?;
    if name.is_empty() {
        return Err(a.invalid("name", name));
    }
    let type_text = a.require("type")?;
    let value_type = ValueType::parse(type_text.trim()).ok_or_else(|| a.invalid("type", type_text))?;
    let value = a.require("value")?;
    if !value_type.accepts(value) {
        return Err(a.invalid("value", value));
    }
    a.finish(mode, |_| false, warnings)?;
    Ok(PropertySpec {
        name: name.to_string(),
        value_type,
        value: value.to_string(),
    })
}

fn escape_attr(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders `d` as descriptor XML. Parsing the output yields `d` again.
pub fn serialize_descriptor(d: &ComponentDescriptor) -> String {
    use std::fmt::Write;

    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<dr:component name=\"{}\" desc=\"{}\" type=\"{}\" enabled=\"{}\" cpuusage=\"{}\">",
        escape_attr(&d.name),
        escape_attr(&d.desc),
        d.task_type.as_str(),
        d.enabled,
        d.cpu_usage
    );
    let _ = writeln!(
        out,
        "  <implementation bincode=\"{}\"/>",
        escape_attr(&d.bincode)
    );
    if let Some(t) = &d.task {
        let _ = writeln!(
            out,
            "  <periodictask frequency=\"{}\" runoncpu=\"{}\" priority=\"{}\"/>",
            t.frequency, t.run_on_cpu, t.priority
        );
    }
    for (tag, ports) in [("outport", &d.outports), ("inport", &d.inports)] {
        for p in ports {
            let _ = writeln!(
                out,
                "  <{tag} name=\"{}\" interface=\"{}\" type=\"{}\" size=\"{}\"/>",
                escape_attr(&p.name),
                p.interface.as_str(),
                p.data_type.as_str(),
                p.size
            );
        }
    }
    for p in &d.properties {
        let _ = writeln!(
            out,
            "  <property name=\"{}\" type=\"{}\" value=\"{}\"/>",
            escape_attr(&p.name),
            p.value_type.as_str(),
            escape_attr(&p.value)
        );
    }
    out.push_str("</dr:component>\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NameCheck {
    Ok,
    /// Accepted, but longer than [`SHORT_NAME_LEN`].
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("component name is empty")]
    EmptyName,
    #[error("component name {0:?} is longer than six characters")]
    TooLong(String),
}

pub fn validate_name(name: &str, strict_six: bool) -> Result<NameCheck, ValidationError> {
    if name.is_empty() {
        return Err(ValidationError::EmptyName);
    }
    if name.chars().count() > SHORT_NAME_LEN {
        if strict_six {
            return Err(ValidationError::TooLong(name.to_string()));
        }
        return Ok(NameCheck::Warning);
    }
    Ok(NameCheck::Ok)
}
