#pragma once

// Parsing and normalization of disassembled instruction text, plus the
// character, opcode and register dictionaries used to featurize it.

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace interbin {

enum class Arch : std::uint8_t { X86, ARM, MIPS };

inline constexpr std::array<Arch, 3> kAllArchs = {Arch::X86, Arch::ARM, Arch::MIPS};

std::string_view arch_name(Arch arch);
// Accepts the canonical names case-insensitively plus common aliases
// (x86_64, amd64, aarch64, arm64, mipsel, ...). Throws UnknownArchitecture.
Arch parse_arch(std::string_view text);

namespace asmnorm {

// Unified identifiers that replace literals and symbols.
inline constexpr std::string_view kIntLiteral = "0";
inline constexpr std::string_view kStringLiteral = "<STR>";
inline constexpr std::string_view kFunctionName = "FOO";
inline constexpr std::string_view kOtherSymbol = "<TAG>";

struct RawInstruction {
  Arch arch = Arch::X86;
  std::string opcode;
  std::vector<std::string> operands;
};

struct NormalizedInstruction {
  Arch arch = Arch::X86;
  std::string opcode;
  std::vector<std::string> operands;
  // "OPCODE~OP1,OP2,..." or just "OPCODE" when there are no operands.
  std::string text;
};

// Splits one line into opcode and operands. The opcode is the first token
// delimited by whitespace or '~'; operands split on commas outside of
// brackets, braces, parentheses and quotes.
RawInstruction tokenize_instruction(std::string_view line, Arch arch);

std::string render(const NormalizedInstruction& insn);

bool is_register(Arch arch, std::string_view token);

// ---------------------------------------------------------------------------
// Character table

class CharTable {
 public:
  static constexpr std::size_t kSize = 58;
  // Characters outside the table: embedded as an all-zero vector.
  static constexpr std::int32_t kUnknown = -1;
  // Positions beyond the end of the text.
  static constexpr std::int32_t kPad = -2;

  static const CharTable& canonical();

  // Upper-cases before lookup; returns kUnknown for characters outside the table.
  std::int32_t index_of(char c) const;
  char at(std::size_t index) const { return chars_.at(index); }
  std::string_view chars() const { return chars_; }
  std::size_t size() const { return chars_.size(); }

 private:
  CharTable();
  std::string chars_;
  std::array<std::int32_t, 256> lookup_{};
};

struct CharIndices {
  std::vector<std::int32_t> indices;
  std::vector<std::uint8_t> mask;
  std::size_t length() const;  // number of real (unmasked) positions
};

// Indices over the rendered text. The opcode/operand separator '~' is looked
// up as a space since '~' is not part of the table.
CharIndices char_indices(const NormalizedInstruction& norm, const CharTable& table,
                         std::size_t max_chars);
CharIndices char_indices(std::string_view text, const CharTable& table, std::size_t max_chars);

// ---------------------------------------------------------------------------
// Per-architecture dictionaries

class TokenTable {
 public:
  TokenTable() = default;
  explicit TokenTable(std::vector<std::string> sorted_tokens);

  std::size_t index_of(std::string_view token) const;
  std::size_t unk_index() const { return tokens_.size(); }
  // Includes the UNK slot.
  std::size_t size() const { return tokens_.size() + 1; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const TokenTable&) const = default;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class ArchDictionaries {
 public:
  static constexpr int kFormatVersion = 1;

  bool has_arch(Arch arch) const;
  const TokenTable& opcodes(Arch arch) const;
  const TokenTable& registers(Arch arch) const;
  std::vector<Arch> archs() const;

  // Function names supplied with the dataset; operands naming one become FOO.
  const std::set<std::string, std::less<>>& known_functions() const { return known_functions_; }
  void set_known_functions(std::set<std::string, std::less<>> names);

  void set_tables(Arch arch, TokenTable opcodes, TokenTable registers);

  nlohmann::json to_json() const;
  static ArchDictionaries from_json(const nlohmann::json& doc);
  // FNV-1a over the serialized document, as 16 hex digits.
  std::string content_hash() const;

  bool operator==(const ArchDictionaries&) const = default;

 private:
  struct Tables {
    TokenTable opcodes;
    TokenTable registers;
    bool operator==(const Tables&) const = default;
  };
  std::map<Arch, Tables> tables_;
  std::set<std::string, std::less<>> known_functions_;
};

NormalizedInstruction normalize_instruction(const RawInstruction& raw, const ArchDictionaries& dicts);

std::size_t opcode_index(const NormalizedInstruction& norm, const ArchDictionaries& dicts);

struct OperandStats {
  std::uint32_t n_string_literals = 0;
  std::uint32_t n_integer_literals = 0;
  std::uint32_t n_function_names = 0;
  std::uint32_t n_other_symbols = 0;
  // Multi-hot over the architecture's register table (UNK slot included).
  std::vector<std::uint8_t> register_indicator;

  bool operator==(const OperandStats&) const = default;
};

OperandStats operand_stats(const NormalizedInstruction& norm, const ArchDictionaries& dicts);

// Registers and opcodes are collected from the normalized form of each
// instruction. Tokens are sorted before index assignment, so the result only
// depends on the corpus as a set.
ArchDictionaries build_dictionaries(std::span<const RawInstruction> corpus,
                                    std::set<std::string, std::less<>> known_functions = {});

// Everything the network reads from one instruction.
struct InstructionFeatures {
  Arch arch = Arch::X86;
  std::string text;
  CharIndices chars;
  std::int32_t opcode = 0;
  OperandStats operands;
};

// tokenize -> normalize -> char indices, opcode index and operand statistics.
InstructionFeatures featurize(std::string_view line, Arch arch, const ArchDictionaries& dicts,
                              std::size_t max_chars);
InstructionFeatures featurize(const NormalizedInstruction& norm, const ArchDictionaries& dicts,
                              std::size_t max_chars);

// Splits a normalized operand into its atoms (registers, identifiers,
// literals), dropping delimiters such as brackets and arithmetic operators.
std::vector<std::string> operand_atoms(std::string_view operand);

}  // namespace asmnorm
}  // namespace interbin
