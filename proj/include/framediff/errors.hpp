#pragma once

#include <stdexcept>
#include <string>

namespace framediff {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateFrame : public Error {
 public:
  using Error::Error;
};

class EmptyMolecule : public Error {
 public:
  using Error::Error;
};

class UnknownAtomType : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, long line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyHistogram : public Error {
 public:
  using Error::Error;
};

class InvalidT : public Error {
 public:
  using Error::Error;
};

class NumericalUnderflow : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace framediff
