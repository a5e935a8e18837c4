//! SSD geometry, logical-to-physical striping and per-block metadata.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::TopologyError;
use crate::reliability::{effective_retention_months, OperatingCondition};
use crate::timing::{Nanos, PageType};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsdConfig {
    pub channels: u32,
    pub dies_per_channel: u32,
    pub planes_per_die: u32,
    pub blocks_per_plane: u32,
    pub pages_per_block: u32,
    pub page_bytes: u64,
}

impl Default for SsdConfig {
    fn default() -> Self {
        SsdConfig {
            channels: 4,
            dies_per_channel: 4,
            planes_per_die: 2,
            blocks_per_plane: 1888,
            pages_per_block: 576,
            page_bytes: 16 * 1024,
        }
    }
}

impl SsdConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let dims = [
            ("channels", u64::from(self.channels)),
            ("dies_per_channel", u64::from(self.dies_per_channel)),
            ("planes_per_die", u64::from(self.planes_per_die)),
            ("blocks_per_plane", u64::from(self.blocks_per_plane)),
            ("pages_per_block", u64::from(self.pages_per_block)),
            ("page_bytes", self.page_bytes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(TopologyError::Geometry(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn dies(&self) -> u32 {
        self.channels * self.dies_per_channel
    }

    pub fn blocks(&self) -> u64 {
        u64::from(self.dies()) * u64::from(self.planes_per_die) * u64::from(self.blocks_per_plane)
    }

    pub fn device_pages(&self) -> u64 {
        self.blocks() * u64::from(self.pages_per_block)
    }

    /// Raw flash capacity: the product of every geometry field.
    pub fn raw_capacity_bytes(&self) -> u64 {
        self.device_pages() * self.page_bytes
    }

    /// Static striping: consecutive LBAs rotate over channels first, then
    /// dies, then planes; within a plane they fill pages, then blocks.
    pub fn map_logical(&self, lba: u64) -> Result<PhysAddr, TopologyError> {
        let pages = self.device_pages();
        if lba >= pages {
            return Err(TopologyError::LbaOutOfRange { lba, pages });
        }
        let mut rest = lba;
        let mut next = |n: u32| {
            let v = (rest % u64::from(n)) as u32;
            rest /= u64::from(n);
            v
        };
        let channel = next(self.channels);
        let die = next(self.dies_per_channel);
        let plane = next(self.planes_per_die);
        let page = next(self.pages_per_block);
        let block = rest as u32;
        Ok(PhysAddr { channel, die, plane, block, page })
    }

    /// Inverse of [`map_logical`](Self::map_logical).
    pub fn to_logical(&self, addr: &PhysAddr) -> u64 {
        let mut lba = u64::from(addr.block);
        lba = lba * u64::from(self.pages_per_block) + u64::from(addr.page);
        lba = lba * u64::from(self.planes_per_die) + u64::from(addr.plane);
        lba = lba * u64::from(self.dies_per_channel) + u64::from(addr.die);
        lba * u64::from(self.channels) + u64::from(addr.channel)
    }

    pub fn die_index(&self, addr: &PhysAddr) -> usize {
        (addr.channel * self.dies_per_channel + addr.die) as usize
    }

    pub fn block_index(&self, addr: &PhysAddr) -> u64 {
        (u64::from(self.die_index(addr) as u32) * u64::from(self.planes_per_die) + u64::from(addr.plane))
            * u64::from(self.blocks_per_plane)
            + u64::from(addr.block)
    }

    /// Globally unique physical page number.
    pub fn page_id(&self, addr: &PhysAddr) -> u64 {
        self.block_index(addr) * u64::from(self.pages_per_block) + u64::from(addr.page)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhysAddr {
    pub channel: u32,
    pub die: u32,
    pub plane: u32,
    pub block: u32,
    pub page: u32,
}

impl PhysAddr {
    pub fn page_type(&self) -> PageType {
        PageType::of_page_index(self.page)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PageState {
    /// Programmed before the run; ages with the sweep's retention.
    Preconditioned,
    ProgrammedAt(Nanos),
    Erased,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockMeta {
    pec: u32,
    pages: Vec<PageState>,
    pub assigned_condition: Option<OperatingCondition>,
}

impl BlockMeta {
    pub fn preconditioned(pec: u32, pages_per_block: u32) -> Self {
        BlockMeta { pec, pages: vec![PageState::Preconditioned; pages_per_block as usize], assigned_condition: None }
    }

    pub fn pec(&self) -> u32 {
        self.pec
    }

    pub fn page_state(&self, page: u32) -> PageState {
        self.pages[page as usize]
    }

    pub fn program(&mut self, page: u32, now: Nanos) {
        self.pages[page as usize] = PageState::ProgrammedAt(now);
    }

    pub fn erase(&mut self) {
        self.pec += 1;
        self.pages.fill(PageState::Erased);
    }

    /// Operating condition a read of `addr` sees at `now`.
    pub fn condition_of(
        &self,
        addr: &PhysAddr,
        now: Nanos,
        base: &OperatingCondition,
        activation_energy_ev: f64,
    ) -> Result<OperatingCondition, TopologyError> {
        if let Some(cond) = self.assigned_condition {
            return Ok(cond);
        }
        let retention_months = match self.page_state(addr.page) {
            PageState::Preconditioned => base.retention_months,
            PageState::ProgrammedAt(t) => {
                let elapsed = Duration::from_nanos(now.saturating_sub(t).0);
                effective_retention_months(elapsed, base.temp_c, activation_energy_ev)
                    .expect("run temperature validated")
            }
            PageState::Erased => {
                return Err(TopologyError::ReadBeforeProgram {
                    channel: addr.channel,
                    die: addr.die,
                    plane: addr.plane,
                    block: addr.block,
                    page: addr.page,
                })
            }
        };
        Ok(OperatingCondition { pec: self.pec, retention_months, temp_c: base.temp_c })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_geometry() {
        let cfg = SsdConfig::default();
        assert_eq!(cfg.dies(), 16);
        assert_eq!(cfg.device_pages(), 4 * 4 * 2 * 1888 * 576);
        assert_eq!(cfg.raw_capacity_bytes(), 4 * 4 * 2 * 1888 * 576 * 16384);
        // raw flash covers the advertised 512 GiB with spare area
        assert!(cfg.raw_capacity_bytes() >= 512 << 30);
        assert_eq!(cfg.pages_per_block % 3, 0);
    }

    #[test]
    fn striping_examples() {
        let cfg = SsdConfig::default();
        assert_eq!(cfg.map_logical(0).unwrap(), PhysAddr { channel: 0, die: 0, plane: 0, block: 0, page: 0 });
        assert_eq!(cfg.map_logical(1).unwrap().channel, 1);
        assert_eq!(cfg.map_logical(4).unwrap(), PhysAddr { channel: 0, die: 1, plane: 0, block: 0, page: 0 });
        let pages = cfg.device_pages();
        assert_eq!(cfg.map_logical(pages), Err(TopologyError::LbaOutOfRange { lba: pages, pages }));
    }

    #[test]
    fn page_types_are_a_third_each() {
        let count = |t| (0..576).filter(|&p| PageType::of_page_index(p) == t).count();
        assert_eq!(count(PageType::Csb), 192);
        assert_eq!(count(PageType::Lsb), 192);
    }

    #[test]
    fn conditions() {
        let cfg = SsdConfig::default();
        let addr = cfg.map_logical(0).unwrap();
        let base = OperatingCondition::new(2000, 6.0, 30.0);
        let mut meta = BlockMeta::preconditioned(2000, cfg.pages_per_block);
        assert_eq!(meta.condition_of(&addr, Nanos(0), &base, 1.108).unwrap(), base);

        meta.program(0, Nanos::from_ms(1));
        let c = meta.condition_of(&addr, Nanos::from_ms(3), &base, 1.108).unwrap();
        assert!(c.retention_months < 1e-6 && c.retention_months > 0.0);

        meta.erase();
        assert_eq!(meta.pec(), 2001);
        assert!(matches!(
            meta.condition_of(&addr, Nanos::from_ms(4), &base, 1.108),
            Err(TopologyError::ReadBeforeProgram { .. })
        ));
    }

    proptest! {
        #[test]
        fn striping_is_bijective(lba in 0u64..34_799_616) {
            let cfg = SsdConfig::default();
            let addr = cfg.map_logical(lba).unwrap();
            prop_assert!(addr.channel < 4 && addr.die < 4 && addr.plane < 2);
            prop_assert!(addr.block < 1888 && addr.page < 576);
            prop_assert_eq!(cfg.to_logical(&addr), lba);
        }
    }
}
