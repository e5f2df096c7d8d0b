//! Genotype data model and the genotype CSV format.
//!
//! The CSV layout is `id,label,<pos1>,<pos2>,...` followed by one row per
//! individual. Exactly one row carries the id `#MAF` and holds the minor
//! allele frequency of every position. Cells are `0`, `1`, `2` or `H`
//! (hidden).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::plan::MaskPlan;

/// Id of the row holding minor allele frequencies in the genotype CSV.
pub const MAF_ROW_ID: &str = "#MAF";

/// Minor-allele count at one position, or a cell masked by the defense.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Genotype {
    Zero = 0,
    One = 1,
    Two = 2,
    Hidden = 3,
}

impl Genotype {
    pub fn from_count(count: u8) -> Option<Self> {
        match count {
            0 => Some(Genotype::Zero),
            1 => Some(Genotype::One),
            2 => Some(Genotype::Two),
            _ => None,
        }
    }

    /// The minor-allele count, `None` for hidden cells.
    #[inline]
    pub fn value(self) -> Option<u8> {
        match self {
            Genotype::Hidden => None,
            g => Some(g as u8),
        }
    }

    #[inline]
    pub fn is_hidden(self) -> bool {
        self == Genotype::Hidden
    }

    #[inline]
    pub fn is_het(self) -> bool {
        self == Genotype::One
    }

    fn parse(cell: &str) -> Option<Self> {
        match cell.trim() {
            "0" => Some(Genotype::Zero),
            "1" => Some(Genotype::One),
            "2" => Some(Genotype::Two),
            "H" => Some(Genotype::Hidden),
            _ => None,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Genotype::Zero => "0",
            Genotype::One => "1",
            Genotype::Two => "2",
            Genotype::Hidden => "H",
        }
    }
}

/// A SNP position and its public minor allele frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct SnpMeta {
    pub id: String,
    pub maf: f64,
}

impl SnpMeta {
    pub fn new(id: impl Into<String>, maf: f64) -> Result<Self> {
        let id = id.into();
        if !(maf > 0.0 && maf <= 0.5) {
            return Err(Error::validation(format!(
                "maf {maf} for position '{id}' is outside (0, 0.5]"
            )));
        }
        Ok(SnpMeta { id, maf })
    }
}

/// Individuals × positions, stored row-major by individual.
#[derive(Clone, Debug, PartialEq)]
pub struct GenotypeMatrix {
    individuals: Vec<String>,
    labels: Vec<String>,
    snps: Vec<SnpMeta>,
    cells: Vec<Genotype>,
    individual_index: HashMap<String, usize>,
    position_index: HashMap<String, usize>,
}

impl GenotypeMatrix {
    /// Builds a matrix from rows of cells. `labels` may be empty, in which
    /// case every individual gets an empty label.
    pub fn new(
        individuals: Vec<String>,
        labels: Vec<String>,
        snps: Vec<SnpMeta>,
        rows: Vec<Vec<Genotype>>,
    ) -> Result<Self> {
        let labels = if labels.is_empty() {
            vec![String::new(); individuals.len()]
        } else {
            labels
        };
        if labels.len() != individuals.len() || rows.len() != individuals.len() {
            return Err(Error::validation(
                "individual, label and row counts disagree",
            ));
        }
        let mut individual_index = HashMap::with_capacity(individuals.len());
        for (i, id) in individuals.iter().enumerate() {
            if individual_index.insert(id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate individual id '{id}'")));
            }
        }
        let mut position_index = HashMap::with_capacity(snps.len());
        for (j, snp) in snps.iter().enumerate() {
            if position_index.insert(snp.id.clone(), j).is_some() {
                return Err(Error::validation(format!(
                    "duplicate position id '{}'",
                    snp.id
                )));
            }
        }
        let mut cells = Vec::with_capacity(individuals.len() * snps.len());
        for (id, row) in individuals.iter().zip(rows) {
            if row.len() != snps.len() {
                return Err(Error::validation(format!(
                    "row for '{id}' has {} cells, expected {}",
                    row.len(),
                    snps.len()
                )));
            }
            cells.extend(row);
        }
        Ok(GenotypeMatrix {
            individuals,
            labels,
            snps,
            cells,
            individual_index,
            position_index,
        })
    }

    pub fn individuals(&self) -> &[String] {
        &self.individuals
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn snps(&self) -> &[SnpMeta] {
        &self.snps
    }

    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn n_snps(&self) -> usize {
        self.snps.len()
    }

    pub fn individual_index(&self, id: &str) -> Result<usize> {
        self.individual_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownIndividual(id.to_string()))
    }

    pub fn position_index(&self, id: &str) -> Result<usize> {
        self.position_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownPosition(id.to_string()))
    }

    /// Cells of one individual in position order.
    #[inline]
    pub fn row(&self, individual: usize) -> &[Genotype] {
        let m = self.snps.len();
        &self.cells[individual * m..(individual + 1) * m]
    }

    #[inline]
    pub fn get(&self, individual: usize, position: usize) -> Genotype {
        self.cells[individual * self.snps.len() + position]
    }

    pub fn cell(&self, individual: &str, position: &str) -> Result<Genotype> {
        Ok(self.get(
            self.individual_index(individual)?,
            self.position_index(position)?,
        ))
    }

    pub(crate) fn hide(&mut self, individual: usize, position: usize) {
        let m = self.snps.len();
        self.cells[individual * m + position] = Genotype::Hidden;
    }

    /// Returns a copy with every cell listed in `plan` hidden.
    pub fn apply_mask(&self, plan: &MaskPlan) -> Result<GenotypeMatrix> {
        let mut masked = self.clone();
        for (id, positions) in plan.iter() {
            let i = self.individual_index(id)?;
            for pos in positions {
                let j = self.position_index(pos)?;
                masked.hide(i, j);
            }
        }
        Ok(masked)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
            return Err(Error::Ingest {
                line: 1,
                message: "header must start with 'id,label'".into(),
            });
        }
        let position_ids: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        if position_ids.is_empty() {
            return Err(Error::Ingest {
                line: 1,
                message: "no SNP columns".into(),
            });
        }

        let mut individuals = Vec::new();
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        let mut mafs: Option<Vec<f64>> = None;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != header.len() {
                return Err(Error::Ingest {
                    line,
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            let id = record[0].trim();
            if id == MAF_ROW_ID {
                if mafs.is_some() {
                    return Err(Error::Ingest {
                        line,
                        message: "duplicate #MAF row".into(),
                    });
                }
                let parsed = record
                    .iter()
                    .skip(2)
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Ingest {
                        line,
                        message: format!("unparseable maf: {e}"),
                    })?;
                mafs = Some(parsed);
                continue;
            }
            if id.is_empty() {
                return Err(Error::Ingest {
                    line,
                    message: "empty individual id".into(),
                });
            }
            if individuals.iter().any(|existing| existing == id) {
                return Err(Error::Ingest {
                    line,
                    message: format!("duplicate individual id '{id}'"),
                });
            }
            let row = record
                .iter()
                .skip(2)
                .map(|cell| {
                    Genotype::parse(cell).ok_or_else(|| Error::Ingest {
                        line,
                        message: format!("invalid genotype '{cell}' (expected 0, 1, 2 or H)"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            individuals.push(id.to_string());
            labels.push(record[1].trim().to_string());
            rows.push(row);
        }

        let mafs = mafs.ok_or_else(|| Error::validation("missing #MAF row"))?;
        let snps = position_ids
            .into_iter()
            .zip(mafs)
            .map(|(id, maf)| SnpMeta::new(id, maf))
            .collect::<Result<Vec<_>>>()?;
        GenotypeMatrix::new(individuals, labels, snps, rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(file)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(self.snps.iter().map(|s| s.id.clone()));
        wtr.write_record(&header)?;

        let mut maf_row = vec![MAF_ROW_ID.to_string(), String::new()];
        maf_row.extend(self.snps.iter().map(|s| s.maf.to_string()));
        wtr.write_record(&maf_row)?;

        for (i, id) in self.individuals.iter().enumerate() {
            let mut record = Vec::with_capacity(self.snps.len() + 2);
            record.push(id.as_str());
            record.push(self.labels[i].as_str());
            record.extend(self.row(i).iter().map(|g| g.symbol()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
