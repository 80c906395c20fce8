#include "interbin/asm_normalize.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <optional>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "interbin/error.hpp"

namespace interbin {

namespace {

std::string to_upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view arch_name(Arch arch) {
  switch (arch) {
    case Arch::X86: return "x86";
    case Arch::ARM: return "ARM";
    case Arch::MIPS: return "MIPS";
  }
  return "?";
}

Arch parse_arch(std::string_view text) {
  const std::string s = to_lower(trim(text));
  if (s == "x86" || s == "x86_64" || s == "x86-64" || s == "amd64" || s == "i386" || s == "x64")
    return Arch::X86;
  if (s == "arm" || s == "arm32" || s == "arm64" || s == "aarch64" || s == "armel" || s == "armhf")
    return Arch::ARM;
  if (s == "mips" || s == "mipsel" || s == "mips32" || s == "mips64") return Arch::MIPS;
  throw Error(ErrorCode::UnknownArchitecture, "unknown architecture '" + std::string(text) + "'");
}

namespace asmnorm {

namespace {

// ---------------------------------------------------------------------------
// Register and keyword vocabularies

using NameSet = std::unordered_set<std::string>;

void add_range(NameSet& set, const std::string& prefix, int lo, int hi, const std::string& suffix = "") {
  for (int i = lo; i <= hi; ++i) set.insert(prefix + std::to_string(i) + suffix);
}

NameSet make_x86_registers() {
  NameSet r = {"rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp", "eax", "ebx", "ecx",
               "edx", "esi", "edi", "ebp", "esp", "ax",  "bx",  "cx",  "dx",  "si",  "di",
               "bp",  "sp",  "al",  "bl",  "cl",  "dl",  "ah",  "bh",  "ch",  "dh",  "sil",
               "dil", "bpl", "spl", "rip", "eip", "ip",  "cs",  "ds",  "es",  "fs",  "gs",
               "ss",  "rflags", "eflags"};
  add_range(r, "r", 8, 15);
  add_range(r, "r", 8, 15, "d");
  add_range(r, "r", 8, 15, "w");
  add_range(r, "r", 8, 15, "b");
  add_range(r, "r", 8, 15, "l");
  add_range(r, "xmm", 0, 31);
  add_range(r, "ymm", 0, 31);
  add_range(r, "zmm", 0, 31);
  add_range(r, "mm", 0, 7);
  add_range(r, "st", 0, 7);
  add_range(r, "k", 0, 7);
  add_range(r, "cr", 0, 15);
  add_range(r, "dr", 0, 15);
  return r;
}

NameSet make_arm_registers() {
  NameSet r = {"sp", "lr", "pc", "fp", "ip", "sb", "sl", "xzr", "wzr", "wsp", "cpsr", "spsr", "apsr",
               "fpscr"};
  add_range(r, "r", 0, 15);
  add_range(r, "x", 0, 30);
  add_range(r, "w", 0, 30);
  for (const char* bank : {"s", "d", "q", "v", "b", "h"}) add_range(r, bank, 0, 31);
  return r;
}

NameSet make_mips_registers() {
  NameSet base = {"zero", "at", "v0", "v1", "k0", "k1", "gp", "sp", "fp", "ra"};
  add_range(base, "a", 0, 3);
  add_range(base, "t", 0, 9);
  add_range(base, "s", 0, 8);
  add_range(base, "f", 0, 31);
  NameSet r = base;
  for (const auto& name : base) r.insert("$" + name);
  add_range(r, "$", 0, 31);
  r.insert("hi");
  r.insert("lo");
  return r;
}

const NameSet& registers_for(Arch arch) {
  static const NameSet x86 = make_x86_registers();
  static const NameSet arm = make_arm_registers();
  static const NameSet mips = make_mips_registers();
  switch (arch) {
    case Arch::X86: return x86;
    case Arch::ARM: return arm;
    case Arch::MIPS: return mips;
  }
  return x86;
}

// Operand words that are neither registers nor symbols.
bool is_keyword(Arch arch, std::string_view lower) {
  static const NameSet arm = {"lsl", "lsr", "asr", "ror", "rrx", "uxtw", "sxtw", "uxtb", "sxtb",
                              "uxth", "sxth", "sxtx", "uxtx", "msl", "eq",  "ne",   "cs",   "hs",
                              "cc",  "lo",  "mi",  "pl",  "vs",  "vc",   "hi",   "ls",   "ge",
                              "lt",  "gt",  "le",  "al"};
  if (arch == Arch::ARM) return arm.contains(std::string(lower));
  return false;
}

// x86 operand words dropped during normalization.
bool is_x86_size_word(std::string_view lower) {
  static const NameSet words = {"byte",    "word",    "dword",   "qword", "tbyte", "tword",
                                "xword",   "oword",   "xmmword", "ymmword", "zmmword", "fword",
                                "ptr",     "short",   "near",    "far",   "offset"};
  return words.contains(std::string(lower));
}

bool is_x86_prefix(std::string_view lower) {
  static const NameSet words = {"rep", "repe", "repz", "repne", "repnz", "lock", "notrack", "bnd"};
  return words.contains(std::string(lower));
}

const NameSet& arm_conditions() {
  static const NameSet conds = {"eq", "ne", "cs", "hs", "cc", "lo", "mi", "pl", "vs",
                                "vc", "hi", "ls", "ge", "lt", "gt", "le", "al"};
  return conds;
}

bool is_call_opcode(Arch arch, std::string_view lower) {
  switch (arch) {
    case Arch::X86: return lower == "call" || lower == "callq" || lower == "calll";
    case Arch::ARM: return lower == "bl" || lower == "blx";
    case Arch::MIPS: return lower == "jal" || lower == "bal" || lower == "jalr";
  }
  return false;
}

bool is_branch_opcode(Arch arch, std::string_view lower) {
  if (lower.empty()) return false;
  switch (arch) {
    case Arch::X86:
      return lower.front() == 'j' || lower.starts_with("loop") || lower == "xbegin";
    case Arch::ARM: {
      if (lower == "cbz" || lower == "cbnz" || lower == "tbz" || lower == "tbnz") return true;
      if (lower.front() != 'b') return false;
      std::string_view rest = lower.substr(1);
      if (rest.starts_with(".")) rest.remove_prefix(1);
      if (rest.ends_with(".w") || rest.ends_with(".n")) rest.remove_suffix(2);
      return rest.empty() || arm_conditions().contains(std::string(rest));
    }
    case Arch::MIPS:
      return lower == "j" || (lower.front() == 'b' && lower != "break");
  }
  return false;
}

// ---------------------------------------------------------------------------
// Operand scanning

bool is_delimiter(char c) {
  switch (c) {
    case '[': case ']': case '(': case ')': case '{': case '}':
    case '+': case '-': case '*': case ',': case ':': case '!':
      return true;
    default:
      return false;
  }
}

struct Piece {
  enum class Kind { Atom, Delim, Space } kind;
  std::string text;
};

std::vector<Piece> scan_operand(std::string_view op) {
  std::vector<Piece> pieces;
  std::size_t i = 0;
  while (i < op.size()) {
    const char c = op[i];
    if (is_space(c)) {
      while (i < op.size() && is_space(op[i])) ++i;
      pieces.push_back({Piece::Kind::Space, " "});
    } else if (is_delimiter(c)) {
      pieces.push_back({Piece::Kind::Delim, std::string(1, c)});
      ++i;
    } else if (c == '"' || c == '\'') {
      std::size_t j = i + 1;
      while (j < op.size() && op[j] != c) {
        if (op[j] == '\\') ++j;
        ++j;
      }
      j = std::min(j + 1, op.size());
      pieces.push_back({Piece::Kind::Atom, std::string(op.substr(i, j - i))});
      i = j;
    } else {
      std::size_t j = i + 1;
      // '#-8' keeps its sign
      if (c == '#' && j < op.size() && (op[j] == '-' || op[j] == '+')) ++j;
      while (j < op.size() && !is_space(op[j]) && !is_delimiter(op[j]) && op[j] != '"' &&
             op[j] != '\'')
        ++j;
      pieces.push_back({Piece::Kind::Atom, std::string(op.substr(i, j - i))});
      i = j;
    }
  }
  return pieces;
}

bool is_hex_digit(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

bool is_numeric_literal(std::string_view s, Arch arch) {
  if (!s.empty() && (s.front() == '#' || (arch == Arch::X86 && s.front() == '$'))) s.remove_prefix(1);
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) s.remove_prefix(1);
  if (s.empty()) return false;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    return std::all_of(s.begin() + 2, s.end(), is_hex_digit);
  }
  if (!is_digit(s.front())) return false;
  if (s.back() == 'h' || s.back() == 'H') {
    return std::all_of(s.begin(), s.end() - 1, is_hex_digit);
  }
  bool seen_dot = false;
  for (char c : s) {
    if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else if (!is_digit(c)) {
      return false;
    }
  }
  return s.back() != '.';
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto head = [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '@' ||
           c == '?' || c == '$';
  };
  auto tail = [&](char c) { return head(c) || is_digit(c); };
  return head(s.front()) && std::all_of(s.begin() + 1, s.end(), tail);
}

bool is_reserved(std::string_view s) {
  return s == kIntLiteral || s == kStringLiteral || s == kFunctionName || s == kOtherSymbol;
}

bool is_quoted(std::string_view s) {
  return s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front();
}

enum class Context { Plain, CallTarget, BranchTarget };

bool names_known_function(std::string_view ident, const ArchDictionaries& dicts) {
  const auto& known = dicts.known_functions();
  if (known.empty()) return false;
  if (known.contains(ident)) return true;
  for (std::string_view prefix : {"sym.imp.", "sym.", "imp.", "fcn."}) {
    if (ident.starts_with(prefix) && known.contains(ident.substr(prefix.size()))) return true;
  }
  return false;
}

std::string classify_symbol(std::string_view ident, Context ctx, const ArchDictionaries& dicts) {
  if (ctx == Context::CallTarget || names_known_function(ident, dicts)) {
    return std::string(kFunctionName);
  }
  const std::string lower = to_lower(ident);
  if (lower.starts_with("str.")) return std::string(kStringLiteral);
  for (std::string_view prefix : {"sym.", "fcn.", "sub_", "imp.", "func."}) {
    if (lower.starts_with(prefix)) return std::string(kFunctionName);
  }
  return std::string(kOtherSymbol);
}

// Returns the normalized atom, or an empty string when the atom is dropped.
std::string normalize_atom(std::string_view atom, Arch arch, Context ctx, const ArchDictionaries& dicts) {
  // A bare "0" as a call or branch target still names a target, not an integer.
  if (is_reserved(atom) && !(atom == kIntLiteral && ctx != Context::Plain)) return std::string(atom);
  if (is_quoted(atom)) return std::string(kStringLiteral);
  // ARM literal-pool loads: "=0x1234", "=label"
  if (atom.size() > 1 && atom.front() == '=') atom.remove_prefix(1);
  if (arch == Arch::X86 && atom.size() > 1 && atom.front() == '%') atom.remove_prefix(1);
  if (is_reserved(atom)) return std::string(atom);
  if (is_numeric_literal(atom, arch)) {
    switch (ctx) {
      case Context::CallTarget: return std::string(kFunctionName);
      case Context::BranchTarget: return std::string(kOtherSymbol);
      case Context::Plain: return std::string(kIntLiteral);
    }
  }
  const std::string lower = to_lower(atom);
  if (registers_for(arch).contains(lower)) return to_upper(atom);
  if (arch == Arch::X86 && is_x86_size_word(lower)) return {};
  if (is_keyword(arch, lower)) return to_upper(atom);
  if (is_identifier(atom)) return classify_symbol(atom, ctx, dicts);
  return to_upper(atom);
}

std::string join_pieces(const std::vector<Piece>& pieces) {
  std::string out;
  bool last_was_atom = false;
  bool pending_space = false;
  for (const auto& p : pieces) {
    switch (p.kind) {
      case Piece::Kind::Space:
        pending_space = true;
        break;
      case Piece::Kind::Delim:
        out += p.text;
        last_was_atom = false;
        pending_space = false;
        break;
      case Piece::Kind::Atom:
        if (pending_space && last_was_atom) out += ' ';
        out += p.text;
        last_was_atom = true;
        pending_space = false;
        break;
    }
  }
  return out;
}

// objdump annotates resolved addresses: "401f20 <printf@plt>", "4005f6 <main+0x20>".
// Returns the symbol when `operand` has that form.
std::optional<std::string> annotated_symbol(std::string_view operand, Arch arch) {
  if (operand.empty() || operand.back() != '>') return std::nullopt;
  const auto open = operand.rfind(" <");
  if (open == std::string_view::npos) return std::nullopt;
  const std::string_view addr = trim(operand.substr(0, open));
  const bool bare_hex = !addr.empty() && std::all_of(addr.begin(), addr.end(), is_hex_digit);
  if (!bare_hex && !is_numeric_literal(addr, arch)) return std::nullopt;
  std::string_view sym = operand.substr(open + 2, operand.size() - open - 3);
  sym = sym.substr(0, std::min(sym.find('+'), sym.find('@')));
  if (sym.empty()) return std::nullopt;
  return std::string(sym);
}

std::string normalize_operand(std::string_view operand, Arch arch, Context ctx,
                              const ArchDictionaries& dicts) {
  if (auto sym = annotated_symbol(trim(operand), arch)) {
    if (ctx == Context::BranchTarget && !names_known_function(*sym, dicts)) return std::string(kOtherSymbol);
    return classify_symbol(*sym, ctx, dicts);
  }
  std::vector<Piece> pieces = scan_operand(trim(operand));
  std::size_t n_atoms = 0;
  bool has_delim = false;
  for (const auto& p : pieces) {
    n_atoms += p.kind == Piece::Kind::Atom;
    has_delim = has_delim || p.kind == Piece::Kind::Delim;
  }
  // Drop x86 size words first so "qword ptr 0x10" is still seen as a single literal.
  if (arch == Arch::X86) {
    std::erase_if(pieces, [&](const Piece& p) {
      return p.kind == Piece::Kind::Atom && is_x86_size_word(to_lower(p.text)) && n_atoms > 1;
    });
    n_atoms = std::count_if(pieces.begin(), pieces.end(),
                            [](const Piece& p) { return p.kind == Piece::Kind::Atom; });
  }
  const bool whole = n_atoms == 1 && !has_delim;
  std::vector<Piece> out;
  out.reserve(pieces.size());
  for (auto& p : pieces) {
    if (p.kind != Piece::Kind::Atom) {
      out.push_back(std::move(p));
      continue;
    }
    std::string norm = normalize_atom(p.text, arch, whole ? ctx : Context::Plain, dicts);
    if (!norm.empty()) out.push_back({Piece::Kind::Atom, std::move(norm)});
  }
  return join_pieces(out);
}

}  // namespace

bool is_register(Arch arch, std::string_view token) {
  return registers_for(arch).contains(to_lower(token));
}

std::vector<std::string> operand_atoms(std::string_view operand) {
  std::vector<std::string> atoms;
  for (auto& p : scan_operand(operand)) {
    if (p.kind == Piece::Kind::Atom) atoms.push_back(std::move(p.text));
  }
  return atoms;
}

// ---------------------------------------------------------------------------
// Tokenizer

RawInstruction tokenize_instruction(std::string_view line, Arch arch) {
  std::string_view body = trim(line);
  if (body.empty()) throw Error(ErrorCode::EmptyLine, "instruction line is empty");

  // Strip ';' comments outside quotes.
  {
    char quote = 0;
    for (std::size_t i = 0; i < body.size(); ++i) {
      const char c = body[i];
      if (quote) {
        if (c == '\\') ++i;
        else if (c == quote) quote = 0;
      } else if (c == '"' || c == '\'') {
        quote = c;
      } else if (c == ';') {
        body = trim(body.substr(0, i));
        break;
      }
    }
    if (body.empty()) throw Error(ErrorCode::EmptyLine, "instruction line holds only a comment");
  }

  auto opcode_end = [](std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && !is_space(s[i]) && s[i] != '~') ++i;
    return i;
  };

  RawInstruction raw;
  raw.arch = arch;
  std::size_t end = opcode_end(body);
  if (end == 0) throw Error(ErrorCode::EmptyLine, "missing opcode in '" + std::string(line) + "'");
  raw.opcode = std::string(body.substr(0, end));
  std::string_view rest = body.substr(end);

  if (arch == Arch::X86) {
    // Fold "rep movsb" style prefixes into the opcode.
    while (is_x86_prefix(to_lower(raw.opcode))) {
      std::string_view next = trim(rest);
      if (!next.empty() && next.front() == '~') next = trim(next.substr(1));
      const std::size_t n = opcode_end(next);
      if (n == 0) break;
      raw.opcode += "_" + std::string(next.substr(0, n));
      rest = next.substr(n);
    }
  }

  rest = trim(rest);
  if (!rest.empty() && rest.front() == '~') rest = trim(rest.substr(1));

  int depth = 0;
  char quote = 0;
  std::size_t start = 0;
  auto flush = [&](std::size_t stop) {
    std::string_view piece = trim(rest.substr(start, stop - start));
    if (!piece.empty()) raw.operands.emplace_back(piece);
  };
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const char c = rest[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    switch (c) {
      case '"': case '\'': quote = c; break;
      case '[': case '(': case '{': ++depth; break;
      case ']': case ')': case '}':
        if (--depth < 0) {
          throw Error(ErrorCode::UnbalancedBrackets,
                      "closing bracket without opener in '" + std::string(line) + "'");
        }
        break;
      case ',':
        if (depth == 0) {
          flush(i);
          start = i + 1;
        }
        break;
      default: break;
    }
  }
  if (depth != 0 || quote != 0) {
    throw Error(ErrorCode::UnbalancedBrackets, "unterminated bracket or quote in '" + std::string(line) + "'");
  }
  flush(rest.size());
  return raw;
}

std::string render(const NormalizedInstruction& insn) {
  std::string text = insn.opcode;
  for (std::size_t i = 0; i < insn.operands.size(); ++i) {
    text += i == 0 ? '~' : ',';
    text += insn.operands[i];
  }
  return text;
}

NormalizedInstruction normalize_instruction(const RawInstruction& raw, const ArchDictionaries& dicts) {
  NormalizedInstruction norm;
  norm.arch = raw.arch;
  norm.opcode = to_upper(raw.opcode);
  const std::string lower = to_lower(raw.opcode);
  const Context ctx = is_call_opcode(raw.arch, lower)     ? Context::CallTarget
                      : is_branch_opcode(raw.arch, lower) ? Context::BranchTarget
                                                          : Context::Plain;
  for (const auto& op : raw.operands) {
    std::string n = normalize_operand(op, raw.arch, ctx, dicts);
    if (!n.empty()) norm.operands.push_back(std::move(n));
  }
  norm.text = render(norm);
  return norm;
}

// ---------------------------------------------------------------------------
// Character table

CharTable::CharTable() : chars_("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789$+-*/[](){}<>,.:_#@!% ") {
  lookup_.fill(kUnknown);
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    lookup_[static_cast<unsigned char>(chars_[i])] = static_cast<std::int32_t>(i);
  }
}

const CharTable& CharTable::canonical() {
  static const CharTable table;
  return table;
}

std::int32_t CharTable::index_of(char c) const {
  const auto u = static_cast<unsigned char>(std::toupper(static_cast<unsigned char>(c)));
  return lookup_[u];
}

std::size_t CharIndices::length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

CharIndices char_indices(std::string_view text, const CharTable& table, std::size_t max_chars) {
  if (max_chars == 0) throw Error(ErrorCode::IndexOutOfRange, "max_chars must be at least 1");
  CharIndices out;
  out.indices.assign(max_chars, CharTable::kPad);
  out.mask.assign(max_chars, 0);
  // One position per UTF-8 code point; multi-byte characters are never in the table.
  std::size_t pos = 0;
  for (std::size_t i = 0; i < text.size() && pos < max_chars; ++pos) {
    const auto byte = static_cast<unsigned char>(text[i]);
    if (byte < 0x80) {
      out.indices[pos] = table.index_of(text[i] == '~' ? ' ' : text[i]);
      ++i;
    } else {
      out.indices[pos] = CharTable::kUnknown;
      ++i;
      while (i < text.size() && (static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) ++i;
    }
    out.mask[pos] = 1;
  }
  return out;
}

CharIndices char_indices(const NormalizedInstruction& norm, const CharTable& table, std::size_t max_chars) {
  return char_indices(std::string_view(norm.text), table, max_chars);
}

// ---------------------------------------------------------------------------
// Dictionaries

TokenTable::TokenTable(std::vector<std::string> sorted_tokens) : tokens_(std::move(sorted_tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

std::size_t TokenTable::index_of(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_index() : it->second;
}

bool ArchDictionaries::has_arch(Arch arch) const { return tables_.contains(arch); }

const TokenTable& ArchDictionaries::opcodes(Arch arch) const {
  auto it = tables_.find(arch);
  if (it == tables_.end()) {
    throw Error(ErrorCode::UnknownArchitecture,
                "no dictionaries for architecture " + std::string(arch_name(arch)));
  }
  return it->second.opcodes;
}

const TokenTable& ArchDictionaries::registers(Arch arch) const {
  auto it = tables_.find(arch);
  if (it == tables_.end()) {
    throw Error(ErrorCode::UnknownArchitecture,
                "no dictionaries for architecture " + std::string(arch_name(arch)));
  }
  return it->second.registers;
}

std::vector<Arch> ArchDictionaries::archs() const {
  std::vector<Arch> out;
  for (const auto& [arch, _] : tables_) out.push_back(arch);
  return out;
}

void ArchDictionaries::set_known_functions(std::set<std::string, std::less<>> names) {
  known_functions_ = std::move(names);
}

void ArchDictionaries::set_tables(Arch arch, TokenTable opcodes, TokenTable registers) {
  tables_[arch] = Tables{std::move(opcodes), std::move(registers)};
}

nlohmann::json ArchDictionaries::to_json() const {
  nlohmann::json doc;
  doc["format"] = "interbin-dictionaries";
  doc["version"] = kFormatVersion;
  doc["char_table"] = std::string(CharTable::canonical().chars());
  doc["known_functions"] = nlohmann::json::array();
  for (const auto& name : known_functions_) doc["known_functions"].push_back(name);
  doc["tables"] = nlohmann::json::array();
  for (const auto& [arch, t] : tables_) {
    doc["tables"].push_back({{"table", "opcode"}, {"arch", arch_name(arch)}, {"tokens", t.opcodes.tokens()}});
    doc["tables"].push_back(
        {{"table", "register"}, {"arch", arch_name(arch)}, {"tokens", t.registers.tokens()}});
  }
  return doc;
}

ArchDictionaries ArchDictionaries::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != "interbin-dictionaries") {
    throw Error(ErrorCode::VersionMismatch, "not an interbin dictionaries document");
  }
  if (doc.value("version", -1) != kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "dictionaries version " + std::to_string(doc.value("version", -1)) + " unsupported");
  }
  ArchDictionaries dicts;
  std::set<std::string, std::less<>> known;
  for (const auto& name : doc.at("known_functions")) known.insert(name.get<std::string>());
  dicts.set_known_functions(std::move(known));
  std::map<Arch, std::pair<std::vector<std::string>, std::vector<std::string>>> staged;
  for (const auto& t : doc.at("tables")) {
    const Arch arch = parse_arch(t.at("arch").get<std::string>());
    const std::string kind = t.at("table").get<std::string>();
    auto tokens = t.at("tokens").get<std::vector<std::string>>();
    if (kind == "opcode") staged[arch].first = std::move(tokens);
    else if (kind == "register") staged[arch].second = std::move(tokens);
    else throw Error(ErrorCode::ParseError, "unknown table kind '" + kind + "'");
  }
  for (auto& [arch, tables] : staged) {
    dicts.set_tables(arch, TokenTable(std::move(tables.first)), TokenTable(std::move(tables.second)));
  }
  return dicts;
}

std::string ArchDictionaries::content_hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t opcode_index(const NormalizedInstruction& norm, const ArchDictionaries& dicts) {
  return dicts.opcodes(norm.arch).index_of(norm.opcode);
}

OperandStats operand_stats(const NormalizedInstruction& norm, const ArchDictionaries& dicts) {
  const TokenTable& regs = dicts.registers(norm.arch);
  OperandStats stats;
  stats.register_indicator.assign(regs.size(), 0);
  for (const auto& op : norm.operands) {
    for (const auto& atom : operand_atoms(op)) {
      if (atom == kIntLiteral) {
        ++stats.n_integer_literals;
      } else if (atom == kStringLiteral) {
        ++stats.n_string_literals;
      } else if (atom == kFunctionName) {
        ++stats.n_function_names;
      } else if (atom == kOtherSymbol) {
        ++stats.n_other_symbols;
      } else if (is_register(norm.arch, atom)) {
        stats.register_indicator[regs.index_of(atom)] = 1;
      } else if (!is_keyword(norm.arch, to_lower(atom))) {
        ++stats.n_other_symbols;
      }
    }
  }
  return stats;
}

ArchDictionaries build_dictionaries(std::span<const RawInstruction> corpus,
                                    std::set<std::string, std::less<>> known_functions) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot build dictionaries from an empty corpus");
  ArchDictionaries dicts;
  dicts.set_known_functions(std::move(known_functions));
  std::map<Arch, std::pair<std::set<std::string>, std::set<std::string>>> seen;
  for (const auto& raw : corpus) {
    const NormalizedInstruction norm = normalize_instruction(raw, dicts);
    auto& [opcodes, registers] = seen[raw.arch];
    opcodes.insert(norm.opcode);
    for (const auto& op : norm.operands) {
      for (const auto& atom : operand_atoms(op)) {
        if (is_register(raw.arch, atom)) registers.insert(atom);
      }
    }
  }
  for (auto& [arch, sets] : seen) {
    dicts.set_tables(arch, TokenTable({sets.first.begin(), sets.first.end()}),
                     TokenTable({sets.second.begin(), sets.second.end()}));
  }
  return dicts;
}

InstructionFeatures featurize(const NormalizedInstruction& norm, const ArchDictionaries& dicts,
                              std::size_t max_chars) {
  InstructionFeatures f;
  f.arch = norm.arch;
  f.text = norm.text;
  f.chars = char_indices(norm, CharTable::canonical(), max_chars);
  f.opcode = static_cast<std::int32_t>(opcode_index(norm, dicts));
  f.operands = operand_stats(norm, dicts);
  return f;
}

InstructionFeatures featurize(std::string_view line, Arch arch, const ArchDictionaries& dicts,
                              std::size_t max_chars) {
  return featurize(normalize_instruction(tokenize_instruction(line, arch), dicts), dicts, max_chars);
}

}  // namespace asmnorm
}  // namespace interbin
